#pragma once

#include <hobj/types.hpp>

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hobj {

using Shape = std::vector<Index>;

std::string shape_string(const Shape& shape);
Index shape_numel(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Receives d(loss)/d(output) and accumulates into the inputs that require grad.
using BackwardFn = std::function<void(const Eigen::ArrayXd& grad_out, const std::vector<NodePtr>& inputs)>;

struct Node {
    Shape shape;
    Eigen::ArrayXd value;
    Eigen::ArrayXd grad;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    std::string op = "leaf";
    std::vector<NodePtr> inputs;
    BackwardFn backward;
};

inline bool wants_grad(const NodePtr& n) { return n->requires_grad; }

} // namespace detail

/// Dense row-major array of doubles with an optional reverse-mode gradient.
///
/// Copies share the underlying node: a Tensor is a handle. A tensor that requires
/// grad always owns a same-shape grad buffer. Results of operations on tensors
/// that require grad record their inputs and a backward closure; the record is
/// released by backward().
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, Eigen::ArrayXd values);

    static Tensor scalar(double value);
    /// Rank-2 tensor copied from an Eigen expression.
    static Tensor from_matrix(const Eigen::Ref<const RowMatrixXd>& m);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    Index dim(std::size_t axis) const;
    Index numel() const;

    const Eigen::ArrayXd& data() const;
    Eigen::ArrayXd& mutable_data();
    double item() const;
    double at(Index flat) const { return data()[flat]; }

    /// Row-major view of a rank-2 tensor.
    Eigen::Map<const RowMatrixXd> matrix() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    const Eigen::ArrayXd& grad() const;
    Eigen::ArrayXd& mutable_grad();
    void zero_grad();

    bool is_leaf() const;
    const std::string& op_name() const;

    /// Copy of the values with no graph attached.
    Tensor detach() const;

    const detail::NodePtr& node() const { return node_; }
    static Tensor wrap(detail::NodePtr node);

private:
    detail::NodePtr node_;
};

/// Creates the result of an operation, recording a backward closure when any input requires grad.
Tensor make_result(std::string op, Shape shape, Eigen::ArrayXd value, const std::vector<Tensor>& inputs, detail::BackwardFn backward);

/// Reverse pass from a scalar loss. Leaf grads accumulate across calls; interior
/// nodes are consumed, so a second call on the same graph throws GraphError.
void backward(const Tensor& loss);

} // namespace hobj
