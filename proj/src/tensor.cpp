#include <hobj/tensor.hpp>

#include <hobj/error.hpp>

#include <sstream>
#include <unordered_set>
#include <utility>

namespace hobj {

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Index shape_numel(const Shape& shape)
{
    Index n = 1;
    for (Index d : shape) {
        if (d < 1)
            throw DimensionError("non-positive extent in shape " + shape_string(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>())
{
    const Index n = shape_numel(shape);
    node_->shape = std::move(shape);
    node_->value = Eigen::ArrayXd::Constant(n, fill);
}

Tensor::Tensor(Shape shape, Eigen::ArrayXd values) : node_(std::make_shared<detail::Node>())
{
    const Index n = shape_numel(shape);
    if (values.size() != n)
        throw DimensionError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, value); }

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrixXd>& m)
{
    Eigen::ArrayXd v(m.size());
    Eigen::Map<RowMatrixXd>(v.data(), m.rows(), m.cols()) = m;
    return Tensor(Shape{m.rows(), m.cols()}, std::move(v));
}

Tensor Tensor::wrap(detail::NodePtr node)
{
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

namespace {
const detail::Node& checked(const detail::NodePtr& n)
{
    if (!n)
        throw GraphError("use of an undefined tensor");
    return *n;
}
} // namespace

const Shape& Tensor::shape() const { return checked(node_).shape; }

Index Tensor::dim(std::size_t axis) const
{
    const auto& s = shape();
    if (axis >= s.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
    return s[axis];
}

Index Tensor::numel() const { return checked(node_).value.size(); }

const Eigen::ArrayXd& Tensor::data() const { return checked(node_).value; }

Eigen::ArrayXd& Tensor::mutable_data()
{
    checked(node_);
    if (!node_->leaf)
        throw GraphError("in-place write to a non-leaf tensor (" + node_->op + ")");
    return node_->value;
}

double Tensor::item() const
{
    if (numel() != 1)
        throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return data()[0];
}

Eigen::Map<const RowMatrixXd> Tensor::matrix() const
{
    if (rank() != 2)
        throw DimensionError("matrix view needs rank 2, got " + shape_string(shape()));
    return {data().data(), shape()[0], shape()[1]};
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on)
{
    checked(node_);
    if (!node_->leaf)
        throw GraphError("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = on;
    if (on)
        node_->grad = Eigen::ArrayXd::Zero(node_->value.size());
    else
        node_->grad.resize(0);
    return *this;
}

const Eigen::ArrayXd& Tensor::grad() const
{
    if (!requires_grad())
        throw GraphError("grad() on a tensor that does not require grad");
    return node_->grad;
}

Eigen::ArrayXd& Tensor::mutable_grad()
{
    if (!requires_grad())
        throw GraphError("grad() on a tensor that does not require grad");
    return node_->grad;
}

void Tensor::zero_grad()
{
    if (requires_grad())
        node_->grad.setZero();
}

bool Tensor::is_leaf() const { return checked(node_).leaf; }

const std::string& Tensor::op_name() const { return checked(node_).op; }

Tensor Tensor::detach() const { return Tensor(shape(), data()); }

Tensor make_result(std::string op, Shape shape, Eigen::ArrayXd value, const std::vector<Tensor>& inputs, detail::BackwardFn backward)
{
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = std::move(op);
    bool any = false;
    for (const auto& t : inputs)
        any = any || t.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->leaf = false;
        node->grad = Eigen::ArrayXd::Zero(node->value.size());
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs)
            node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor::wrap(std::move(node));
}

void backward(const Tensor& loss)
{
    const auto& root = loss.node();
    if (!root)
        throw GraphError("backward on an undefined tensor");
    if (root->value.size() != 1)
        throw GraphError("backward needs a scalar loss, got shape " + shape_string(root->shape));
    if (root->consumed)
        throw GraphError("backward called twice on the same graph without rebuilding it");
    if (!root->requires_grad)
        return;
    if (root->leaf) {
        root->grad[0] += 1.0;
        return;
    }

    // Iterative post-order DFS over interior nodes; reversed, it visits every node after its consumers.
    std::vector<detail::NodePtr> order;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        detail::NodePtr node = stack.back().first;
        std::size_t& next = stack.back().second;
        if (next < node->inputs.size()) {
            detail::NodePtr child = node->inputs[next++];
            if (child->consumed)
                throw GraphError("graph node '" + child->op + "' was consumed by an earlier backward pass");
            if (!child->leaf && child->requires_grad && seen.insert(child.get()).second)
                stack.emplace_back(std::move(child), 0);
        } else {
            order.push_back(std::move(node));
            stack.pop_back();
        }
    }

    root->grad.setConstant(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = it->get();
        node->backward(node->grad, node->inputs);
        node->consumed = true;
        node->backward = nullptr;
        node->inputs.clear();
        node->inputs.shrink_to_fit();
    }
}

} // namespace hobj
