#include <hobj/netpbm.hpp>

#include <hobj/error.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace hobj {

namespace {

void validate(const Raster& r)
{
    if (r.channels != 1 && r.channels != 3)
        throw ConfigError("netpbm raster must have 1 or 3 channels, got " + std::to_string(r.channels));
    if (r.maxval < 1 || r.maxval > 65535)
        throw ConfigError("netpbm maxval must be in [1, 65535], got " + std::to_string(r.maxval));
    if (r.width < 1 || r.height < 1)
        throw ConfigError("netpbm raster must be at least 1x1");
    if (r.samples.size() != r.sample_count())
        throw DimensionError("netpbm raster holds " + std::to_string(r.samples.size()) + " samples, expected " + std::to_string(r.sample_count()));
}

class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : b_(bytes) {}

    void skip_space_and_comments()
    {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n')
                    ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    long long number(const char* what, long long lo, long long hi)
    {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long long v = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > hi)
                throw ParseError(std::string("netpbm ") + what + " out of range", start);
            ++pos_;
        }
        if (pos_ == start)
            throw ParseError(std::string("netpbm header: expected ") + what, start);
        if (v < lo)
            throw ParseError(std::string("netpbm ") + what + " out of range", start);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    std::string_view b_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_netpbm(const Raster& r)
{
    validate(r);
    std::ostringstream head;
    head << (r.channels == 3 ? "P6" : "P5") << '\n' << r.width << ' ' << r.height << '\n' << r.maxval << '\n';
    std::string out = head.str();
    const bool wide = r.maxval > 255;
    out.reserve(out.size() + r.samples.size() * (wide ? 2 : 1));
    for (std::uint16_t s : r.samples) {
        if (s > r.maxval)
            throw DomainError("netpbm sample " + std::to_string(s) + " exceeds maxval " + std::to_string(r.maxval));
        if (wide)
            out.push_back(static_cast<char>(s >> 8));
        out.push_back(static_cast<char>(s & 0xFF));
    }
    return out;
}

Raster decode_netpbm(std::string_view bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError("not a binary netpbm file (expected magic P5 or P6)", 0);
    Raster r;
    r.channels = bytes[1] == '6' ? 3 : 1;
    HeaderReader h(bytes);
    h.advance(2);
    const std::size_t before_width = h.pos();
    if (before_width >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[before_width])))
        throw ParseError("netpbm header: expected whitespace after magic", before_width);
    r.width = h.number("width", 1, 1 << 20);
    r.height = h.number("height", 1, 1 << 20);
    r.maxval = static_cast<int>(h.number("maxval", 1, 65535));
    if (h.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[h.pos()])))
        throw ParseError("netpbm header: expected a single whitespace byte after maxval", h.pos());
    h.advance(1);

    const std::size_t width_bytes = r.maxval > 255 ? 2 : 1;
    const std::size_t need = r.sample_count() * width_bytes;
    const std::size_t start = h.pos();
    if (bytes.size() - start < need)
        throw ParseError("netpbm payload truncated: " + std::to_string(need) + " bytes needed, " + std::to_string(bytes.size() - start) + " present", bytes.size());
    if (bytes.size() - start > need)
        throw ParseError("netpbm payload has trailing bytes", start + need);
    r.samples.resize(r.sample_count());
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const std::size_t at = start + i * width_bytes;
        std::uint16_t v = static_cast<unsigned char>(bytes[at]);
        if (width_bytes == 2)
            v = static_cast<std::uint16_t>((v << 8) | static_cast<unsigned char>(bytes[at + 1]));
        if (v > r.maxval)
            throw ParseError("netpbm sample exceeds maxval", at);
        r.samples[i] = v;
    }
    return r;
}

void write_netpbm(const std::string& path, const Raster& r)
{
    const std::string data = encode_netpbm(r);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f)
        throw IoError("failed writing '" + path + "'");
}

Raster read_netpbm(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open '" + path + "' for reading");
    const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_netpbm(data);
}

Raster quantize(const Eigen::ArrayXd& planar, int channels, Index height, Index width, int maxval)
{
    Raster r;
    r.channels = channels;
    r.height = height;
    r.width = width;
    r.maxval = maxval;
    if (planar.size() != channels * height * width)
        throw DimensionError("quantize: " + std::to_string(planar.size()) + " values for a " + std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width) + " raster");
    r.samples.resize(static_cast<std::size_t>(planar.size()));
    const Index plane = height * width;
    for (Index c = 0; c < channels; ++c)
        for (Index p = 0; p < plane; ++p) {
            const double v = std::clamp(planar[c * plane + p], 0.0, 1.0);
            r.samples[static_cast<std::size_t>(p * channels + c)] = static_cast<std::uint16_t>(std::lround(v * maxval));
        }
    validate(r);
    return r;
}

Eigen::ArrayXd dequantize(const Raster& r)
{
    validate(r);
    const Index plane = r.height * r.width;
    Eigen::ArrayXd out(plane * r.channels);
    for (Index c = 0; c < r.channels; ++c)
        for (Index p = 0; p < plane; ++p)
            out[c * plane + p] = static_cast<double>(r.samples[static_cast<std::size_t>(p * r.channels + c)]) / r.maxval;
    return out;
}

} // namespace hobj
