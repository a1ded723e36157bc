#pragma once

#include <hobj/params.hpp>
#include <hobj/tensor.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hobj {

/// A scalar function of some leaves whose analytic gradient is checked against
/// central finite differences.
struct GradcheckCase {
    std::string scope;
    std::string name;
    std::function<Tensor()> loss;
    std::vector<NamedTensor> leaves;
    double tolerance = 1e-4;
    Index max_entries = 0; // per leaf; 0 checks every entry
};

struct LeafCheck {
    std::string name;
    Index entries = 0;
    double rel_error = 0; // ||analytic - numeric|| / (||analytic|| + 1e-8) over the checked entries
};

struct GradcheckResult {
    std::string scope;
    std::string name;
    double tolerance = 0;
    double max_rel_error = 0;
    std::string worst_leaf;
    bool pass = false;
    std::vector<LeafCheck> leaves;
};

GradcheckResult check_gradients(const GradcheckCase& c, std::uint64_t seed = 0, double step = 1e-5);

/// Scopes accepted by builtin_cases, besides "all".
const std::vector<std::string>& gradcheck_scopes();

/// Every differentiable op and composite block of the given scope. ConfigError for unknown scopes.
std::vector<GradcheckCase> builtin_cases(const std::string& scope, std::uint64_t seed = 0);

/// An op whose backward has the wrong sign; check_gradients must reject it.
GradcheckCase wrong_sign_fixture(std::uint64_t seed = 0);

/// Checks each case, writing one line per case to report when given.
std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases, std::ostream* report = nullptr, std::uint64_t seed = 0);

} // namespace hobj
