#include <hobj/train.hpp>

#include <hobj/error.hpp>
#include <hobj/metrics.hpp>
#include <hobj/ops.hpp>

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hobj {

using detail::NodePtr;
using Eigen::ArrayXd;

OptimState make_optim_state(const ParameterSet& params, const AdamWConfig& cfg)
{
    OptimState st;
    st.config = cfg;
    for (const auto& e : params.entries()) {
        st.m.push_back(ArrayXd::Zero(e.tensor.numel()));
        st.v.push_back(ArrayXd::Zero(e.tensor.numel()));
    }
    return st;
}

void optim_step(ParameterSet& params, OptimState& st)
{
    const auto& entries = params.entries();
    if (st.m.size() != entries.size())
        throw DimensionError("optimizer state tracks " + std::to_string(st.m.size()) + " parameters, the set has " + std::to_string(entries.size()));
    for (const auto& e : entries)
        if (!e.tensor.grad().allFinite())
            throw NumericalError("non-finite gradient in parameter '" + e.name + "'");

    const AdamWConfig& c = st.config;
    st.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor t = entries[i].tensor;
        ArrayXd& p = t.mutable_data();
        const ArrayXd& g = t.grad();
        p *= 1.0 - c.lr * c.weight_decay;
        st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g;
        st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g.square();
        p -= c.lr * (st.m[i] / bc1) / ((st.v[i] / bc2).sqrt() + c.eps);
    }
}

Tensor soft_iou_loss(const Tensor& logits, const ImageD& target)
{
    if (logits.numel() != target.size())
        throw DimensionError("soft_iou_loss: logits " + shape_string(logits.shape()) + " vs target " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    const ArrayXd t = Eigen::Map<const ArrayXd>(target.data(), target.size());
    const ArrayXd p = logits.data().unaryExpr([](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); });
    const double inter = (p * t).sum();
    const double uni = (p + t - p * t).sum();
    ArrayXd out(1);
    out[0] = 1.0 - inter / uni;
    return make_result("soft_iou_loss", {}, std::move(out), {logits}, [p, t, inter, uni](const ArrayXd& g, const std::vector<NodePtr>& in) {
        // d(I/U)/dp_i = (t_i U - I (1 - t_i)) / U^2
        const ArrayXd dp = -(t * uni - inter * (1.0 - t)) / (uni * uni);
        in[0]->grad += g[0] * dp * p * (1.0 - p);
    });
}

LossTerms loss_saliency(const Tensor& logits, const ImageD& mask)
{
    if (logits.rank() != 3 || logits.dim(0) != 1 || logits.dim(1) != mask.rows() || logits.dim(2) != mask.cols())
        throw DimensionError("loss_saliency: logits " + shape_string(logits.shape()) + " vs mask " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
    const Tensor t({logits.numel()}, ArrayXd(Eigen::Map<const ArrayXd>(mask.data(), mask.size())));
    const Tensor z = reshape(logits, {logits.numel()});
    const Tensor bce = mean(sub(softplus(z), mul(z, t)));
    const Tensor iou = soft_iou_loss(logits, mask);
    LossTerms out;
    out.total = add(bce, iou);
    out.bce = bce.item();
    out.soft_iou = iou.item();
    return out;
}

LossTerms loss_semantic(const Tensor& logits, const LabelImage& labels, int ignore_index)
{
    if (logits.rank() != 3 || logits.dim(1) != labels.rows() || logits.dim(2) != labels.cols())
        throw DimensionError("loss_semantic: logits " + shape_string(logits.shape()) + " vs labels " + std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
    const Index k = logits.dim(0), p = labels.size();
    auto idx = std::make_shared<std::vector<Index>>();
    for (Index i = 0; i < p; ++i) {
        const int l = labels(i);
        if (l == ignore_index)
            continue;
        if (l < 0 || l >= k)
            throw DomainError("loss_semantic: label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
        idx->push_back(static_cast<Index>(l) * p + i);
    }
    LossTerms out;
    if (idx->empty()) {
        out.total = Tensor::scalar(0.0);
        out.all_ignored = true;
        return out;
    }
    const Index n = static_cast<Index>(idx->size());
    const Tensor logp = log_softmax(reshape(logits, {k, p}));
    const Tensor picked = gather(logp, std::move(idx), {n}, "pick_label");
    out.total = neg(mean(picked));
    out.ce = out.total.item();
    return out;
}

void TrainConfig::validate() const
{
    if (!(optim.lr >= 0) || !(optim.weight_decay >= 0) || !(optim.eps > 0))
        throw ConfigError("learning rate and weight decay must be non-negative, eps positive");
    if (!(optim.beta1 >= 0 && optim.beta1 < 1) || !(optim.beta2 >= 0 && optim.beta2 < 1))
        throw ConfigError("betas must lie in [0, 1)");
    if (batch_size < 1 || steps < 0)
        throw ConfigError("batch size must be positive and steps non-negative");
}

std::string loss_csv_header(TaskKind task) { return task == TaskKind::saliency ? "step,loss,bce,soft_iou" : "step,loss,ce"; }

std::string loss_csv_row(TaskKind task, const StepLoss& s)
{
    std::ostringstream os;
    os << std::setprecision(17) << s.step << ',' << s.loss;
    if (task == TaskKind::saliency)
        os << ',' << s.bce << ',' << s.soft_iou;
    else
        os << ',' << s.ce;
    return os.str();
}

std::vector<StepLoss> train_loop(Model& model, const std::vector<ModalityPair>& data, const TrainConfig& cfg, std::ostream* csv, const std::function<void(const StepLoss&)>& on_step)
{
    cfg.validate();
    if (data.empty())
        throw ConfigError("train_loop: dataset is empty");
    if (cfg.task != model.config().task)
        throw ConfigError("train_loop: task " + to_string(cfg.task) + " does not match the model's " + to_string(model.config().task));

    ParameterSet& params = model.parameters();
    OptimState st = make_optim_state(params, cfg.optim);
    SplitMix64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    const auto reshuffle = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
        cursor = 0;
    };

    if (csv)
        *csv << loss_csv_header(cfg.task) << '\n';
    std::vector<StepLoss> curve;
    curve.reserve(static_cast<std::size_t>(cfg.steps));
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    for (Index step = 0; step < cfg.steps; ++step) {
        params.zero_grad();
        StepLoss s;
        s.step = step;
        for (Index b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size())
                reshuffle();
            const ModalityPair* sample = &data[order[cursor++]];
            ModalityPair flipped;
            if (cfg.hflip && rng.uniform() < 0.5) {
                flipped = hflip(*sample);
                sample = &flipped;
            }
            Tensor logits;
            try {
                logits = model.forward(sample->rgb, cfg.use_xmod ? &sample->xmod : nullptr);
            } catch (const DomainError& e) {
                // Only reachable once parameters have blown up (e.g. softplus underflowing to 0).
                throw NumericalError("training diverged at step " + std::to_string(step) + ": " + e.what());
            }
            const LossTerms terms = cfg.task == TaskKind::saliency ? loss_saliency(logits, sample->mask) : loss_semantic(logits, sample->labels, cfg.ignore_index);
            const double value = terms.total.item();
            if (!std::isfinite(value))
                throw NumericalError("loss diverged (non-finite) at step " + std::to_string(step));
            s.loss += value * inv_batch;
            s.bce += terms.bce * inv_batch;
            s.soft_iou += terms.soft_iou * inv_batch;
            s.ce += terms.ce * inv_batch;
            if (terms.total.requires_grad())
                backward(scale(terms.total, inv_batch));
        }
        optim_step(params, st);
        curve.push_back(s);
        if (csv)
            *csv << loss_csv_row(cfg.task, s) << '\n';
        if (on_step)
            on_step(s);
    }
    return curve;
}

ImageD predict_saliency(const Model& model, const ModalityPair& pair, bool use_xmod)
{
    const Tensor logits = model.forward(pair.rgb, use_xmod ? &pair.xmod : nullptr);
    if (logits.dim(0) != 1)
        throw ConfigError("predict_saliency: model has " + std::to_string(logits.dim(0)) + " output channels");
    ImageD p(logits.dim(1), logits.dim(2));
    for (Index i = 0; i < p.size(); ++i) {
        const double z = logits.at(i);
        p(i) = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return p;
}

LabelImage predict_labels(const Model& model, const ModalityPair& pair, bool use_xmod)
{
    const Tensor logits = model.forward(pair.rgb, use_xmod ? &pair.xmod : nullptr);
    const Index k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    LabelImage out(h, w);
    if (k == 1) {
        for (Index i = 0; i < h * w; ++i)
            out(i) = logits.at(i) > 0 ? 1 : 0;
        return out;
    }
    for (Index i = 0; i < h * w; ++i) {
        Index best = 0;
        for (Index c = 1; c < k; ++c)
            if (logits.at(c * h * w + i) > logits.at(best * h * w + i))
                best = c;
        out(i) = static_cast<int>(best);
    }
    return out;
}

double mean_soft_iou(const Model& model, const std::vector<ModalityPair>& data, bool use_xmod)
{
    if (data.empty())
        throw ConfigError("mean_soft_iou: dataset is empty");
    double acc = 0;
    for (const auto& d : data)
        acc += metrics::soft_iou(metrics::SaliencyPair<double>(predict_saliency(model, d, use_xmod), d.mask));
    return acc / static_cast<double>(data.size());
}

double mean_foreground_iou(const Model& model, const std::vector<ModalityPair>& data, bool use_xmod)
{
    if (data.empty())
        throw ConfigError("mean_foreground_iou: dataset is empty");
    double acc = 0;
    for (const auto& d : data)
        acc += metrics::foreground_iou(metrics::SaliencyPair<double>(predict_saliency(model, d, use_xmod), d.mask));
    return acc / static_cast<double>(data.size());
}

} // namespace hobj
