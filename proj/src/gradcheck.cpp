#include "ctsynth/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ctsynth::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(g.constant(t));
  Var out = f(g, leaves);
  require(g.value(out).size() == 1, ErrorKind::shape, "gradcheck: function must return a scalar");
  return g.value(out)[0];
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options) {
  Graph<double> g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.parameter(t));
  Var out = f(g, leaves);
  g.backward(out);

  GradcheckReport report;
  std::mt19937_64 rng(options.seed);
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = g.grad(leaves[k]);
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = probe[k][i];
      probe[k][i] = orig + options.eps;
      const double fp = evaluate(f, probe);
      probe[k][i] = orig - options.eps;
      const double fm = evaluate(f, probe);
      probe[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_input = k;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

double gradcheck(const std::function<Var(Graph<double>&, Var)>& f, const Tensor<double>& x0, double eps) {
  GradcheckOptions opts;
  opts.eps = eps;
  auto wrapped = [&f](Graph<double>& g, const std::vector<Var>& xs) { return f(g, xs[0]); };
  return gradcheck(wrapped, {x0}, opts).max_rel_error;
}

}  // namespace ctsynth::ad
