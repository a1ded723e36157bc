// Command-line entry point: synth, train, eval, infer, gradcheck, scan-bench.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 numerical failure.

#include <hobj/bench.hpp>
#include <hobj/error.hpp>
#include <hobj/gradcheck.hpp>
#include <hobj/metrics.hpp>
#include <hobj/netpbm.hpp>
#include <hobj/parallel.hpp>
#include <hobj/synth.hpp>
#include <hobj/train.hpp>
#include <hobj/version.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hobj;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kNumerical = 3 };

struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One per run, written next to the run's outputs.
struct Manifest {
    std::string subcommand;
    json config = json::object();
    std::uint64_t seed = 0;
    json artifacts = json::array();
    json notes = json::array();
    std::string path;

    void write(double seconds, int exit_code) const
    {
        json j;
        j["subcommand"] = subcommand;
        j["version"] = kVersion;
        j["config"] = config;
        j["seed"] = seed;
        j["artifacts"] = artifacts;
        j["notes"] = notes;
        j["wall_time_s"] = seconds;
        j["exit_code"] = exit_code;
        if (const auto parent = fs::path(path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        std::ofstream f(path);
        if (!f)
            throw IoError("cannot write manifest '" + path + "'");
        f << j.dump(2) << '\n';
    }
};

void write_text(const std::string& path, const std::string& text)
{
    if (const auto parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    f << text;
}

std::vector<ModalityPair> load_or_fail(const std::string& root, Manifest& m)
{
    LoadReport rep = load_dataset(root);
    for (const auto& e : rep.errors) {
        std::cerr << "load: " << e << '\n';
        m.notes.push_back("load: " + e);
    }
    if (!rep.errors.empty())
        throw ValidationFailure(std::to_string(rep.errors.size()) + " incomplete sample(s) in '" + root + "'");
    if (rep.pairs.empty())
        throw ValidationFailure("dataset '" + root + "' is empty");
    return std::move(rep.pairs);
}

// ---- synth ---------------------------------------------------------------

struct SynthOpts {
    std::string out;
    std::uint64_t count = 8;
    SceneConfig scene;
    int xmod_bits = 8;
};

int run_synth(const SynthOpts& o, Manifest& m)
{
    m.seed = o.scene.seed;
    m.config = {{"count", o.count}, {"height", o.scene.height}, {"width", o.scene.width}, {"kappa", o.scene.kappa}, {"min_objects", o.scene.min_objects}, {"max_objects", o.scene.max_objects},
                {"modality_strength", o.scene.modality_strength}, {"occluder_density", o.scene.occluder_density}, {"noise_sigma", o.scene.noise_sigma}, {"xmod_bits", o.xmod_bits}};
    const auto data = generate_dataset(o.scene, o.count);
    save_dataset(o.out, data, o.xmod_bits == 16 ? 65535 : 255);
    m.artifacts.push_back(o.out);
    std::cout << "wrote " << data.size() << " scenes (" << o.scene.height << "x" << o.scene.width << ", kappa " << o.scene.kappa << ") to " << o.out << '\n';
    return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainOpts {
    std::string data, out, loss_csv, init;
    std::string task = "saliency";
    Index classes = 0;
    std::vector<Index> depths{2, 2}, channels{16, 32};
    Index patch = 4, state = 4;
    TrainConfig train;
    bool rgb_only = false;
};

int run_train(TrainOpts o, Manifest& m)
{
    const auto data = load_or_fail(o.data, m);
    ModelConfig mc;
    mc.task = parse_task(o.task);
    mc.num_classes = o.classes > 0 ? o.classes : (mc.task == TaskKind::saliency ? 1 : 2);
    mc.stages.depths = o.depths;
    mc.stages.channels = o.channels;
    mc.stages.patch_size = o.patch;
    mc.state = o.state;
    mc.height = data.front().height();
    mc.width = data.front().width();
    for (const auto& p : data)
        if (p.height() != mc.height || p.width() != mc.width)
            throw ValidationFailure("sample '" + p.id + "' is " + std::to_string(p.height()) + "x" + std::to_string(p.width()) + ", expected " + std::to_string(mc.height) + "x" + std::to_string(mc.width));
    o.train.task = mc.task;
    o.train.use_xmod = !o.rgb_only;

    Model model(mc, o.train.seed);
    if (!o.init.empty())
        model.load_weights(o.init);
    if (o.loss_csv.empty())
        o.loss_csv = o.out + ".loss.csv";
    m.seed = o.train.seed;
    m.config = {{"model", json::parse(mc.to_json())}, {"data", o.data}, {"steps", o.train.steps}, {"batch_size", o.train.batch_size}, {"lr", o.train.optim.lr}, {"weight_decay", o.train.optim.weight_decay},
                {"beta1", o.train.optim.beta1}, {"beta2", o.train.optim.beta2}, {"eps", o.train.optim.eps}, {"hflip", o.train.hflip}, {"rgb_only", o.rgb_only}, {"init", o.init}};
    if (o.rgb_only)
        m.notes.push_back("x modality ignored: self-fusion of the RGB stream");

    std::ostringstream csv;
    const auto curve = train_loop(model, data, o.train, &csv);
    write_text(o.loss_csv, csv.str());
    model.save(o.out);
    m.artifacts.push_back(o.out);
    m.artifacts.push_back(o.loss_csv);
    std::cout << "trained " << curve.size() << " steps on " << data.size() << " samples, " << model.parameter_count() << " parameters";
    if (!curve.empty())
        std::cout << ", final loss " << curve.back().loss;
    std::cout << "\ncheckpoint " << o.out << "\nloss curve " << o.loss_csv << '\n';
    return kOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalOpts {
    std::string ckpt, data, csv;
    bool rgb_only = false;
    int ignore_index = 255;
};

int run_eval(EvalOpts o, Manifest& m)
{
    const Model model = Model::load(o.ckpt);
    const auto data = load_or_fail(o.data, m);
    const ModelConfig& mc = model.config();
    m.config = {{"checkpoint", o.ckpt}, {"data", o.data}, {"rgb_only", o.rgb_only}, {"model", json::parse(mc.to_json())}};
    if (o.csv.empty())
        o.csv = (fs::path(o.ckpt).parent_path() / (fs::path(o.ckpt).stem().string() + ".eval.csv")).string();

    metrics::ReportBuilder builder(std::max<Index>(2, mc.num_classes));
    std::ostringstream per_image;
    per_image << std::setprecision(10);
    if (mc.task == TaskKind::saliency) {
        per_image << "id,s_alpha,f_beta_w,e_phi,iou\n";
        for (const auto& p : data) {
            const metrics::SaliencyPair<double> pair(predict_saliency(model, p, !o.rgb_only), p.mask);
            builder.add_saliency(p.id, pair);
            const metrics::SaliencyScores s = metrics::saliency_scores(pair);
            per_image << p.id << ',' << s.s_alpha << ',' << s.f_beta_w << ',' << s.e_phi << ',' << s.iou << '\n';
        }
    } else {
        per_image << "id,macc,miou\n";
        for (const auto& p : data) {
            const LabelImage pred = predict_labels(model, p, !o.rgb_only);
            builder.add_segmentation(p.id, p.labels, pred, o.ignore_index);
            metrics::ConfusionMatrix cm(std::max<Index>(2, mc.num_classes));
            cm.add(p.labels, pred, o.ignore_index);
            if (cm.total() == 0) {
                per_image << p.id << ",,\n";
                continue;
            }
            const metrics::SegmentationScores s = metrics::miou_macc(cm);
            per_image << p.id << ',' << s.macc << ',' << s.miou << '\n';
        }
    }
    const metrics::MetricsReport rep = builder.finish();
    write_text(o.csv, per_image.str());
    m.artifacts.push_back(o.csv);

    std::cout << std::fixed << std::setprecision(4);
    if (mc.task == TaskKind::saliency) {
        std::cout << std::left << std::setw(10) << "images" << std::setw(10) << "S_alpha" << std::setw(10) << "F_beta^w" << std::setw(10) << "E_phi" << std::setw(10) << "IoU" << '\n';
        std::cout << std::setw(10) << data.size() << std::setw(10) << rep.mean.s_alpha << std::setw(10) << rep.mean.f_beta_w << std::setw(10) << rep.mean.e_phi << std::setw(10) << rep.mean.iou << '\n';
        m.config["result"] = {{"s_alpha", rep.mean.s_alpha}, {"f_beta_w", rep.mean.f_beta_w}, {"e_phi", rep.mean.e_phi}, {"iou", rep.mean.iou}};
    } else {
        std::cout << std::left << std::setw(10) << "images" << std::setw(10) << "mAcc" << std::setw(10) << "mIoU" << '\n';
        std::cout << std::setw(10) << data.size() << std::setw(10) << rep.pooled.macc << std::setw(10) << rep.pooled.miou << '\n';
        m.config["result"] = {{"macc", rep.pooled.macc}, {"miou", rep.pooled.miou}};
    }
    std::cout << "per-image scores " << o.csv << '\n';
    return kOk;
}

// ---- infer ---------------------------------------------------------------

struct InferOpts {
    std::string ckpt, rgb, x, out;
};

int run_infer(const InferOpts& o, Manifest& m)
{
    const Model model = Model::load(o.ckpt);
    const ModelConfig& mc = model.config();
    const Raster r_rgb = read_netpbm(o.rgb);
    if (r_rgb.channels != 3)
        throw ValidationFailure("'" + o.rgb + "' is not an RGB (P6) image");
    if (r_rgb.height != mc.height || r_rgb.width != mc.width)
        throw ValidationFailure("image '" + o.rgb + "' is " + std::to_string(r_rgb.height) + "x" + std::to_string(r_rgb.width) + " but checkpoint '" + o.ckpt + "' expects " + std::to_string(mc.height) + "x" + std::to_string(mc.width));
    ModalityPair p;
    p.id = fs::path(o.rgb).stem().string();
    p.rgb = Tensor({3, r_rgb.height, r_rgb.width}, dequantize(r_rgb));
    p.mask = ImageD::Zero(r_rgb.height, r_rgb.width);
    const bool have_x = !o.x.empty();
    if (have_x) {
        const Raster r_x = read_netpbm(o.x);
        if (r_x.channels != 1 || r_x.height != r_rgb.height || r_x.width != r_rgb.width)
            throw ValidationFailure("x image '" + o.x + "' must be a P5 image matching the RGB resolution");
        p.xmod = Tensor({1, r_x.height, r_x.width}, dequantize(r_x));
    } else {
        m.notes.push_back("no x image given: self-fusion of the RGB stream");
    }
    m.config = {{"checkpoint", o.ckpt}, {"rgb", o.rgb}, {"x", have_x ? json(o.x) : json(nullptr)}, {"self_fusion", !have_x}, {"model", json::parse(mc.to_json())}};

    Raster out;
    out.channels = 1;
    out.height = mc.height;
    out.width = mc.width;
    out.maxval = 255;
    out.samples.resize(static_cast<std::size_t>(mc.height * mc.width));
    double fg = 0;
    if (mc.task == TaskKind::saliency) {
        const ImageD prob = predict_saliency(model, p, have_x);
        for (Index i = 0; i < prob.size(); ++i) {
            out.samples[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::lround(std::clamp(prob(i), 0.0, 1.0) * 255));
            fg += prob(i) > 0.5 ? 1 : 0;
        }
    } else {
        const LabelImage lab = predict_labels(model, p, have_x);
        for (Index i = 0; i < lab.size(); ++i) {
            out.samples[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::min(lab(i), 255));
            fg += lab(i) != 0 ? 1 : 0;
        }
    }
    if (const auto parent = fs::path(o.out).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_netpbm(o.out, out);
    m.artifacts.push_back(o.out);
    const double frac = fg / static_cast<double>(mc.height * mc.width);
    m.config["foreground_fraction"] = frac;
    std::cout << "resolution " << mc.width << "x" << mc.height << "\nforeground fraction " << std::fixed << std::setprecision(4) << frac << "\nmask " << o.out << (have_x ? "" : " (self-fusion)") << '\n';
    return kOk;
}

// ---- gradcheck -----------------------------------------------------------

int run_gradcheck_cmd(const std::string& scope, std::uint64_t seed, Manifest& m)
{
    m.seed = seed;
    m.config = {{"scope", scope}};
    const auto results = run_gradcheck(builtin_cases(scope, seed), &std::cout, seed);
    std::size_t failed = 0;
    json per_case = json::array();
    for (const auto& r : results) {
        failed += r.pass ? 0 : 1;
        per_case.push_back({{"scope", r.scope}, {"name", r.name}, {"rel_err", r.max_rel_error}, {"tolerance", r.tolerance}, {"pass", r.pass}});
    }
    m.config["results"] = per_case;
    std::cout << results.size() - failed << "/" << results.size() << " passed\n";
    if (failed)
        throw ValidationFailure(std::to_string(failed) + " gradient check(s) failed");
    return kOk;
}

// ---- scan-bench ----------------------------------------------------------

int run_bench(const BenchConfig& cfg, const std::string& csv_path, Manifest& m)
{
    m.seed = cfg.seed;
    m.config = {{"lengths", cfg.lengths}, {"state", cfg.state}, {"channels", cfg.channels}, {"impls", cfg.impls}, {"chunk", cfg.chunk}, {"repeats", cfg.repeats}, {"precision", cfg.single_precision ? "float" : "double"}};
    const auto rows = run_scan_bench(cfg);
    std::cout << bench_table(rows);
    if (!csv_path.empty()) {
        write_text(csv_path, bench_csv(rows));
        m.artifacts.push_back(csv_path);
    }
    json exps = json::object();
    for (const auto& impl : cfg.impls)
        if (const auto e = fit_time_exponent(rows, impl)) {
            std::cout << "time exponent (" << impl << "): " << std::fixed << std::setprecision(3) << *e << std::defaultfloat << '\n';
            exps[impl] = *e;
        }
    m.config["time_exponents"] = exps;
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multimodal hidden-object detection: synthetic data, training, evaluation, inference and numerical checks"};
    app.set_version_flag("--version", std::string("hobj ") + kVersion);
    app.require_subcommand(1);
    int threads = 1;
    std::string manifest_path;
    app.add_option("--threads", threads, "Cap on internal parallelism")->check(CLI::PositiveNumber);
    app.add_option("--manifest", manifest_path, "Run manifest path (default: next to the outputs)");

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic paired-modality dataset");
    synth->add_option("--out", so.out, "Dataset root")->required();
    synth->add_option("--count", so.count, "Number of scenes");
    synth->add_option("--kappa", so.scene.kappa, "Camouflage strength in [0, 1]");
    synth->add_option("--seed", so.scene.seed, "Generator seed");
    synth->add_option("--height", so.scene.height, "Image height");
    synth->add_option("--width", so.scene.width, "Image width");
    synth->add_option("--min-objects", so.scene.min_objects, "Minimum objects per scene");
    synth->add_option("--max-objects", so.scene.max_objects, "Maximum objects per scene");
    synth->add_option("--strength", so.scene.modality_strength, "Object offset in the x modality");
    synth->add_option("--occluders", so.scene.occluder_density, "Expected occluder bars per scene");
    synth->add_option("--noise", so.scene.noise_sigma, "Gaussian noise sigma");
    synth->add_option("--xmod-bits", so.xmod_bits, "x modality bit depth")->check(CLI::IsMember({8, 16}));

    TrainOpts to;
    auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
    train->add_option("--data", to.data, "Dataset root")->required();
    train->add_option("--out", to.out, "Checkpoint path")->required();
    train->add_option("--task", to.task, "saliency or semantic")->check(CLI::IsMember({"saliency", "semantic"}));
    train->add_option("--classes", to.classes, "Classes for the semantic task (default 2)");
    train->add_option("--steps", to.train.steps, "Optimizer steps");
    train->add_option("--batch", to.train.batch_size, "Samples per step");
    train->add_option("--lr", to.train.optim.lr, "Learning rate");
    train->add_option("--wd", to.train.optim.weight_decay, "Decoupled weight decay");
    train->add_option("--seed", to.train.seed, "Initialization and shuffling seed");
    train->add_option("--depths", to.depths, "Blocks per stage")->delimiter(',');
    train->add_option("--channels", to.channels, "Channels per stage")->delimiter(',');
    train->add_option("--patch", to.patch, "Patch size");
    train->add_option("--state", to.state, "SSM state dimension");
    train->add_option("--loss-csv", to.loss_csv, "Loss curve path (default <out>.loss.csv)");
    train->add_option("--init", to.init, "Start from this checkpoint's weights");
    train->add_option("--ignore-index", to.train.ignore_index, "Label ignored by the semantic loss");
    train->add_flag("--hflip", to.train.hflip, "Random horizontal flips");
    train->add_flag("--rgb-only", to.rgb_only, "Ignore the x modality (self-fusion)");

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
    eval->add_option("--ckpt", eo.ckpt, "Checkpoint")->required();
    eval->add_option("--data", eo.data, "Dataset root")->required();
    eval->add_option("--csv", eo.csv, "Per-image CSV path (default <ckpt stem>.eval.csv)");
    eval->add_option("--ignore-index", eo.ignore_index, "Label ignored by the segmentation metrics");
    eval->add_flag("--rgb-only", eo.rgb_only, "Ignore the x modality (self-fusion)");

    InferOpts io;
    auto* infer = app.add_subcommand("infer", "Predict a mask for one image pair");
    infer->add_option("--ckpt", io.ckpt, "Checkpoint")->required();
    infer->add_option("--rgb", io.rgb, "RGB image (P6)")->required();
    infer->add_option("--x", io.x, "x-modality image (P5); omitted means self-fusion");
    infer->add_option("--out", io.out, "Output mask (P5)")->required();

    std::string scope = "all";
    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck->add_option("--scope", scope, "all, or one of: tensor-autodiff ssm-scan ss2d net-blocks mmff decoder model");
    gradcheck->add_option("--seed", gc_seed, "Input seed");

    BenchConfig bc;
    std::string bench_csv_path, precision = "double";
    auto* bench = app.add_subcommand("scan-bench", "Time the scan kernels against sequence length");
    bench->add_option("--lengths", bc.lengths, "Sequence lengths")->delimiter(',');
    bench->add_option("--state", bc.state, "State dimension N");
    bench->add_option("--channels", bc.channels, "Channels D");
    bench->add_option("--impls", bc.impls, "sequential, chunked, streaming")->delimiter(',');
    bench->add_option("--chunk", bc.chunk, "Chunk size of the chunked kernel");
    bench->add_option("--repeats", bc.repeats, "Timed repeats (best is reported)");
    bench->add_option("--precision", precision, "double or float")->check(CLI::IsMember({"double", "float"}));
    bench->add_option("--seed", bc.seed, "Input seed");
    bench->add_option("--csv", bench_csv_path, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }
    set_max_threads(threads);

    Manifest m;
    m.subcommand = app.get_subcommands().front()->get_name();
    if (!manifest_path.empty())
        m.path = manifest_path;
    else if (*synth)
        m.path = (fs::path(so.out) / "manifest.json").string();
    else if (*train)
        m.path = to.out + ".manifest.json";
    else if (*eval)
        m.path = eo.ckpt + ".eval.manifest.json";
    else if (*infer)
        m.path = io.out + ".manifest.json";
    else
        m.path = "hobj-" + m.subcommand + ".manifest.json";
    m.config = json::object();

    const auto t0 = std::chrono::steady_clock::now();
    int code = kOk;
    try {
        if (*synth)
            code = run_synth(so, m);
        else if (*train)
            code = run_train(to, m);
        else if (*eval)
            code = run_eval(eo, m);
        else if (*infer)
            code = run_infer(io, m);
        else if (*gradcheck)
            code = run_gradcheck_cmd(scope, gc_seed, m);
        else if (*bench) {
            bc.single_precision = precision == "float";
            code = run_bench(bc, bench_csv_path, m);
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        code = kNumerical;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        code = kIo;
    } catch (const ParseError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        code = kIo;
    } catch (const IntegrityError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        code = kIo;
    } catch (const VersionError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        code = kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = kValidation;
    }
    m.notes.push_back(code == kOk ? "ok" : "failed");
    try {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.write(secs, code);
    } catch (const std::exception& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return code == kOk ? kIo : code;
    }
    return code;
}
