#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "petnet/layers.hpp"
#include "petnet/tensor.hpp"

namespace petnet::gradcheck {

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    double step = 0.0;
    bool pass = false;
};

// Central differences: grad[i] = (f(x + h e_i) - f(x - h e_i)) / 2h.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h);

// Six-nested-loop direct convolution, sharing nothing with the layers module
// beyond the Tensor type. This is the oracle conv2d_forward is checked
// against.
Tensor conv_bruteforce(const Tensor& input, const Tensor& weights, const Tensor& bias,
                       layers::Padding padding);

// Relative error |a - fd| / max(|a|, |fd|, 1e-8), maximized over the layer's
// input and every parameter tensor, using a fixed random linear probe of the
// output as the scalar loss.
GradCheckReport check_layer(const std::string& kind, uint64_t seed);

// Every registered check: all layer kinds plus fused softmax+cross-entropy
// and two end-to-end models. Throws if a layer kind exported by the layers
// module has no registered check.
std::vector<GradCheckReport> run_all(uint64_t seed = 7);

std::vector<std::string> registered_checks();

bool all_pass(const std::vector<GradCheckReport>& reports);
void print_reports(std::ostream& out, const std::vector<GradCheckReport>& reports);

}  // namespace petnet::gradcheck
