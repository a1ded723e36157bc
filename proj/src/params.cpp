#include <hobj/params.hpp>

#include <hobj/error.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace hobj {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Tensor ParameterSet::add(const std::string& name, Shape shape, Eigen::ArrayXd values)
{
    if (find(name))
        throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor t(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    entries_.push_back({name, t});
    return t;
}

Tensor ParameterSet::add_uniform(const std::string& name, Shape shape, double bound, SplitMix64& rng)
{
    Eigen::ArrayXd v(shape_numel(shape));
    for (Index i = 0; i < v.size(); ++i)
        v[i] = rng.uniform(-bound, bound);
    return add(name, std::move(shape), std::move(v));
}

Tensor ParameterSet::add_constant(const std::string& name, Shape shape, double value)
{
    Eigen::ArrayXd v = Eigen::ArrayXd::Constant(shape_numel(shape), value);
    return add(name, std::move(shape), std::move(v));
}

const Tensor* ParameterSet::find(const std::string& name) const
{
    for (const auto& e : entries_)
        if (e.name == name)
            return &e.tensor;
    return nullptr;
}

Index ParameterSet::total_size() const
{
    Index n = 0;
    for (const auto& e : entries_)
        n += e.tensor.numel();
    return n;
}

void ParameterSet::zero_grad()
{
    for (auto& e : entries_)
        e.tensor.zero_grad();
}

namespace {

constexpr char kMagic[8] = {'H', 'O', 'B', 'J', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v)
{
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get(const char* what)
    {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n, const char* what)
    {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what)
    {
        if (bytes_.size() - pos_ < n)
            throw IntegrityError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params, const std::string& config_json)
{
    std::string buf(kMagic, sizeof(kMagic));
    put<std::uint32_t>(buf, kVersion);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(config_json.size()));
    buf += config_json;
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.entries().size()));
    std::uint64_t total = 0;
    for (const auto& e : params.entries()) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.name.size()));
        buf += e.name;
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.tensor.rank()));
        for (Index d : e.tensor.shape())
            put<std::uint64_t>(buf, static_cast<std::uint64_t>(d));
        total += static_cast<std::uint64_t>(e.tensor.numel());
    }
    put<std::uint64_t>(buf, total);
    for (const auto& e : params.entries())
        buf.append(reinterpret_cast<const char*>(e.tensor.data().data()), static_cast<std::size_t>(e.tensor.numel()) * sizeof(double));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint '" + path + "'");
    Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

    if (r.get_string(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw IntegrityError("'" + path + "' is not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kVersion)
        throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " + std::to_string(kVersion) + ")");

    Checkpoint ck;
    ck.config_json = r.get_string(r.get<std::uint32_t>("config length"), "config");
    const auto count = r.get<std::uint32_t>("parameter count");
    std::uint64_t expected = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        ck.names.push_back(r.get_string(r.get<std::uint32_t>("name length"), "parameter name"));
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank > 16)
            throw IntegrityError("implausible rank " + std::to_string(rank) + " for '" + ck.names.back() + "'");
        Shape shape;
        std::uint64_t n = 1;
        for (std::uint32_t a = 0; a < rank; ++a) {
            const auto d = r.get<std::uint64_t>("extent");
            if (d == 0)
                throw IntegrityError("zero extent for '" + ck.names.back() + "'");
            shape.push_back(static_cast<Index>(d));
            n *= d;
        }
        ck.shapes.push_back(std::move(shape));
        expected += n;
    }
    const auto total = r.get<std::uint64_t>("value count");
    if (total != expected)
        throw IntegrityError("checkpoint value count " + std::to_string(total) + " disagrees with manifest total " + std::to_string(expected));
    if (r.remaining() != total * sizeof(double))
        throw IntegrityError("checkpoint payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(total * sizeof(double)) + " (truncated or padded file)");
    for (const auto& shape : ck.shapes) {
        const auto n = static_cast<std::size_t>(shape_numel(shape));
        Eigen::ArrayXd v(static_cast<Index>(n));
        const std::string raw = r.get_string(n * sizeof(double), "values");
        std::memcpy(v.data(), raw.data(), raw.size());
        ck.values.push_back(std::move(v));
    }
    return ck;
}

void load_parameters(const Checkpoint& ckpt, ParameterSet& params)
{
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ckpt.names.size(); ++i)
        index.emplace(ckpt.names[i], i);
    for (const auto& name : ckpt.names)
        if (!params.find(name))
            throw VersionError("checkpoint contains unknown parameter '" + name + "'");
    for (const auto& e : params.entries()) {
        auto it = index.find(e.name);
        if (it == index.end())
            throw VersionError("checkpoint is missing parameter '" + e.name + "'");
        if (ckpt.shapes[it->second] != e.tensor.shape())
            throw VersionError("parameter '" + e.name + "' has shape " + shape_string(ckpt.shapes[it->second]) + " in checkpoint but " + shape_string(e.tensor.shape()) + " in model");
    }
    for (const auto& e : params.entries()) {
        Tensor t = e.tensor;
        t.mutable_data() = ckpt.values[index.at(e.name)];
    }
}

} // namespace hobj
