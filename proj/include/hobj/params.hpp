#pragma once

#include <hobj/rng.hpp>
#include <hobj/tensor.hpp>

#include <string>
#include <vector>

namespace hobj {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Ordered registry of learnable leaves. Registration order is the checkpoint order.
class ParameterSet {
public:
    /// Registers a leaf that requires grad. Names must be unique.
    Tensor add(const std::string& name, Shape shape, Eigen::ArrayXd values);
    Tensor add_uniform(const std::string& name, Shape shape, double bound, SplitMix64& rng);
    Tensor add_constant(const std::string& name, Shape shape, double value);

    const std::vector<NamedTensor>& entries() const { return entries_; }
    const Tensor* find(const std::string& name) const;
    Index total_size() const;
    void zero_grad();

private:
    std::vector<NamedTensor> entries_;
};

/// Checkpoint file layout (all integers little-endian):
///
///   magic        8 bytes  "HOBJCKPT"
///   version      u32      1
///   config_len   u32      followed by config_len bytes of UTF-8 JSON (model configuration)
///   count        u32      number of parameters
///   count times:
///     name_len   u32      followed by name_len bytes
///     rank       u32      followed by rank x u64 extents
///   value_count  u64      sum of all parameter sizes
///   values       value_count x float64 (IEEE-754 little-endian), parameters in manifest order
struct Checkpoint {
    std::string config_json;
    std::vector<std::string> names;
    std::vector<Shape> shapes;
    std::vector<Eigen::ArrayXd> values;
};

void save_checkpoint(const std::string& path, const ParameterSet& params, const std::string& config_json);
Checkpoint read_checkpoint(const std::string& path);
/// Copies checkpoint values into params. Throws VersionError naming the first
/// unknown, missing, or reshaped parameter.
void load_parameters(const Checkpoint& ckpt, ParameterSet& params);

} // namespace hobj
