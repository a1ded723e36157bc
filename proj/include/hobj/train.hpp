#pragma once

#include <hobj/dataset.hpp>
#include <hobj/model.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hobj {

struct AdamWConfig {
    double lr = 6e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Moments shaped like their parameters, in ParameterSet registration order.
struct OptimState {
    AdamWConfig config;
    std::vector<Eigen::ArrayXd> m, v;
    std::int64_t step = 0;
};

OptimState make_optim_state(const ParameterSet& params, const AdamWConfig& cfg);

/// Decoupled-decay adaptive-moment step from the parameters' accumulated grads:
///   p <- p * (1 - lr * wd)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps),  hats bias-corrected by 1 - b^t
/// Throws NumericalError naming the first parameter with a non-finite gradient,
/// before anything is modified.
void optim_step(ParameterSet& params, OptimState& st);

struct LossTerms {
    Tensor total;
    double bce = 0;      // saliency
    double soft_iou = 0; // saliency: 1 - soft IoU
    double ce = 0;       // semantic
    bool all_ignored = false;
};

/// 1 - sum(p t) / sum(p + t - p t), p = sigmoid(z), as one differentiable op.
Tensor soft_iou_loss(const Tensor& logits, const ImageD& target);

/// mean(softplus(z) - z t) + soft_iou_loss. logits: [1 x H x W].
LossTerms loss_saliency(const Tensor& logits, const ImageD& mask);

/// Mean per-pixel cross-entropy over pixels whose label is not ignore_index.
/// logits: [K x H x W]. If every pixel is ignored the loss is a constant 0 and all_ignored is set.
LossTerms loss_semantic(const Tensor& logits, const LabelImage& labels, int ignore_index = 255);

struct TrainConfig {
    AdamWConfig optim;
    Index batch_size = 4;
    Index steps = 100;
    std::uint64_t seed = 0;
    TaskKind task = TaskKind::saliency;
    int ignore_index = 255;
    bool hflip = false;
    bool use_xmod = true; // false trains the self-fusion (RGB-only) path

    void validate() const;
};

struct StepLoss {
    Index step = 0;
    double loss = 0;
    double bce = 0, soft_iou = 0, ce = 0;
};

/// CSV header for the task's loss curve: step,loss,<component losses>.
std::string loss_csv_header(TaskKind task);
std::string loss_csv_row(TaskKind task, const StepLoss& s);

/// Per-sample graphs, gradients averaged over the batch, one optimizer step per batch.
/// Batches are drawn from seeded epoch permutations. Throws NumericalError on a
/// non-finite loss, naming the step. When csv is given one row is written per step.
std::vector<StepLoss> train_loop(Model& model, const std::vector<ModalityPair>& data, const TrainConfig& cfg, std::ostream* csv = nullptr,
                                 const std::function<void(const StepLoss&)>& on_step = {});

/// Foreground probabilities sigmoid(logits) for a saliency model.
ImageD predict_saliency(const Model& model, const ModalityPair& pair, bool use_xmod = true);
/// Arg-max labels for a semantic model.
LabelImage predict_labels(const Model& model, const ModalityPair& pair, bool use_xmod = true);

/// Mean over images of the soft IoU between predicted probabilities and masks.
double mean_soft_iou(const Model& model, const std::vector<ModalityPair>& data, bool use_xmod = true);
/// Mean over images of the foreground IoU at probability 0.5.
double mean_foreground_iou(const Model& model, const std::vector<ModalityPair>& data, bool use_xmod = true);

} // namespace hobj
