#include <hobj/dataset.hpp>

#include <hobj/error.hpp>
#include <hobj/netpbm.hpp>

#include <filesystem>
#include <map>
#include <set>

namespace hobj {

namespace fs = std::filesystem;

namespace {

std::set<std::string> stems(const fs::path& dir, const std::string& ext)
{
    std::set<std::string> out;
    if (!fs::is_directory(dir))
        return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext)
            out.insert(e.path().stem().string());
    return out;
}

Tensor planar_tensor(const Raster& r) { return Tensor({r.channels, r.height, r.width}, dequantize(r)); }

} // namespace

LoadReport load_dataset(const std::string& root)
{
    const fs::path base(root);
    if (!fs::is_directory(base))
        throw IoError("dataset root '" + root + "' is not a directory");
    const auto rgb = stems(base / "rgb", ".ppm");
    const auto x = stems(base / "x", ".pgm");
    const auto mask = stems(base / "mask", ".pgm");
    std::set<std::string> all = rgb;
    all.insert(x.begin(), x.end());
    all.insert(mask.begin(), mask.end());

    LoadReport rep;
    for (const auto& s : all) {
        std::string missing;
        if (!rgb.count(s))
            missing += " rgb/" + s + ".ppm";
        if (!x.count(s))
            missing += " x/" + s + ".pgm";
        if (!mask.count(s))
            missing += " mask/" + s + ".pgm";
        if (!missing.empty()) {
            rep.errors.push_back("stem '" + s + "': missing" + missing);
            continue;
        }
        const Raster r_rgb = read_netpbm((base / "rgb" / (s + ".ppm")).string());
        const Raster r_x = read_netpbm((base / "x" / (s + ".pgm")).string());
        const Raster r_m = read_netpbm((base / "mask" / (s + ".pgm")).string());
        if (r_rgb.channels != 3 || r_x.channels != 1 || r_m.channels != 1) {
            rep.errors.push_back("stem '" + s + "': expected a P6 rgb image and P5 x/mask images");
            continue;
        }
        if (r_x.width != r_rgb.width || r_x.height != r_rgb.height || r_m.width != r_rgb.width || r_m.height != r_rgb.height) {
            rep.errors.push_back("stem '" + s + "': modalities differ in resolution");
            continue;
        }
        ModalityPair p;
        p.id = s;
        p.rgb = planar_tensor(r_rgb);
        p.xmod = planar_tensor(r_x);
        p.labels.resize(r_m.height, r_m.width);
        p.mask.resize(r_m.height, r_m.width);
        for (Index i = 0; i < p.labels.size(); ++i) {
            const int v = r_m.samples[static_cast<std::size_t>(i)];
            p.labels(i) = v;
            p.mask(i) = 2 * v > r_m.maxval ? 1.0 : 0.0;
        }
        rep.pairs.push_back(std::move(p));
    }
    return rep;
}

void save_dataset(const std::string& root, const std::vector<ModalityPair>& pairs, int xmod_maxval, bool raw_labels)
{
    const fs::path base(root);
    std::error_code ec;
    for (const char* sub : {"rgb", "x", "mask"}) {
        fs::create_directories(base / sub, ec);
        if (ec)
            throw IoError("cannot create '" + (base / sub).string() + "': " + ec.message());
    }
    for (const auto& p : pairs) {
        const Index h = p.height(), w = p.width();
        write_netpbm((base / "rgb" / (p.id + ".ppm")).string(), quantize(p.rgb.data(), 3, h, w));
        write_netpbm((base / "x" / (p.id + ".pgm")).string(), quantize(p.xmod.data(), 1, h, w, xmod_maxval));
        Raster m;
        m.channels = 1;
        m.height = h;
        m.width = w;
        m.maxval = 255;
        m.samples.resize(static_cast<std::size_t>(h * w));
        for (Index i = 0; i < h * w; ++i)
            m.samples[static_cast<std::size_t>(i)] = raw_labels ? static_cast<std::uint16_t>(p.labels(i)) : static_cast<std::uint16_t>(p.mask(i) > 0.5 ? 255 : 0);
        write_netpbm((base / "mask" / (p.id + ".pgm")).string(), m);
    }
}

ModalityPair hflip(const ModalityPair& p)
{
    const auto flip_planar = [](const Tensor& t) {
        const Index c = t.dim(0), h = t.dim(1), w = t.dim(2);
        Eigen::ArrayXd v(t.numel());
        for (Index k = 0; k < c; ++k)
            for (Index i = 0; i < h; ++i)
                for (Index j = 0; j < w; ++j)
                    v[(k * h + i) * w + j] = t.at((k * h + i) * w + (w - 1 - j));
        return Tensor(t.shape(), v);
    };
    ModalityPair out;
    out.id = p.id;
    out.rgb = flip_planar(p.rgb);
    out.xmod = flip_planar(p.xmod);
    out.mask = p.mask.rowwise().reverse();
    out.labels = p.labels.rowwise().reverse();
    return out;
}

} // namespace hobj
