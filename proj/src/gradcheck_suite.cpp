#include "ctsynth/gradcheck_suite.hpp"

#include <cmath>
#include <map>
#include <random>

#include "ctsynth/gradcheck.hpp"
#include "ctsynth/losses.hpp"
#include "ctsynth/memory.hpp"
#include "ctsynth/networks.hpp"
#include "ctsynth/ops.hpp"

namespace ctsynth {

namespace {

using G = ad::Graph<double>;
using ad::Var;
using TD = Tensor<double>;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  TD randn(Shape s, double scale = 1.0) {
    TD t(std::move(s));
    std::normal_distribution<double> d(0.0, scale);
    for (double& v : t.values()) v = d(rng_);
    return t;
  }

  // Values bounded away from zero, for ops with a kink there.
  TD away_from_zero(Shape s) {
    TD t = randn(std::move(s));
    for (double& v : t.values()) v = v >= 0 ? v + 0.1 : v - 0.1;
    return t;
  }

  /// Reduces an arbitrary output to a scalar with a fixed random projection.
  Var project(G& g, Var y) {
    const Shape& s = g.shape(y);
    auto it = projections_.find(s);
    if (it == projections_.end()) it = projections_.emplace(s, randn(s)).first;
    return ad::sum(g, ad::mul(g, y, g.constant(it->second)));
  }

  void check(const std::string& name, const ad::ScalarFn& f, const std::vector<TD>& inputs, double tol,
             double eps = 1e-6, std::size_t max_coords = 0) {
    ad::GradcheckOptions opts;
    opts.eps = eps;
    opts.max_coords_per_input = max_coords;
    opts.seed = rng_();
    const auto rep = ad::gradcheck(f, inputs, opts);
    cases.push_back({name, rep.max_rel_error, tol, rep.coords_checked});
  }

  std::vector<GradcheckCase> cases;

 private:
  std::mt19937_64 rng_;
  std::map<Shape, TD> projections_;
};

NetConfig tiny_net() {
  NetConfig c;
  c.r = 2;
  c.base_channels = 16;
  c.blocks_per_group = 1;
  c.s2d_block = 4;
  c.attention_reduction = 4;
  c.pint_channels = 4;
  c.pint_groups = 1;
  c.pint_blocks = 1;
  return c;
}

// Parameters with every tensor randomized, so no branch starts dead. Weights
// get std 1/sqrt(fan_in) to keep activations O(1) through the whole network.
ParamSet<double> randomized(const ParamSet<float>& ps, Suite& s) {
  ParamSet<double> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Shape& shape = ps.at(i).shape();
    const std::size_t fan_in = shape.size() > 1 ? ps.at(i).size() / static_cast<std::size_t>(shape[0]) : 0;
    out.add(ps.names()[i], s.randn(shape, fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.1));
  }
  return out;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(bool full, std::uint64_t seed) {
  Suite s(seed);
  constexpr double kOpTol = 1e-4;
  constexpr double kNetTol = 1e-3;

  auto unary = [&](const std::string& name, auto op, TD x) {
    s.check(name, [&, op](G& g, const std::vector<Var>& v) { return s.project(g, op(g, v[0])); }, {std::move(x)}, kOpTol);
  };
  auto binary = [&](const std::string& name, auto op, TD x, TD y) {
    s.check(name, [&, op](G& g, const std::vector<Var>& v) { return s.project(g, op(g, v[0], v[1])); },
            {std::move(x), std::move(y)}, kOpTol);
  };

  s.check("conv2d", [&](G& g, const std::vector<Var>& v) { return s.project(g, ad::conv2d(g, v[0], v[1], v[2])); },
          {s.randn({2, 3, 5, 6}), s.randn({4, 3, 3, 3}), s.randn({4})}, kOpTol);
  s.check("conv2d_1x1", [&](G& g, const std::vector<Var>& v) { return s.project(g, ad::conv2d(g, v[0], v[1], v[2])); },
          {s.randn({2, 3, 4, 4}), s.randn({2, 3, 1, 1}), s.randn({2})}, kOpTol);
  unary("relu", [](G& g, Var x) { return ad::relu(g, x); }, s.away_from_zero({3, 7}));
  unary("sigmoid", [](G& g, Var x) { return ad::sigmoid(g, x); }, s.randn({3, 7}, 2.0));
  binary("add", [](G& g, Var x, Var y) { return ad::add(g, x, y); }, s.randn({2, 5}), s.randn({2, 5}));
  binary("sub", [](G& g, Var x, Var y) { return ad::sub(g, x, y); }, s.randn({2, 5}), s.randn({2, 5}));
  binary("mul", [](G& g, Var x, Var y) { return ad::mul(g, x, y); }, s.randn({2, 5}), s.randn({2, 5}));
  unary("scale", [](G& g, Var x) { return ad::scale(g, x, -2.5); }, s.randn({4, 3}));
  unary("add_scalar", [](G& g, Var x) { return ad::add_scalar(g, x, 0.7); }, s.randn({4, 3}));
  binary("concat_channels", [](G& g, Var x, Var y) { return ad::concat_channels(g, x, y); }, s.randn({2, 2, 3, 3}),
         s.randn({2, 3, 3, 3}));
  s.check("linear", [&](G& g, const std::vector<Var>& v) { return s.project(g, ad::linear(g, v[0], v[1], v[2])); },
          {s.randn({3, 5}), s.randn({4, 5}), s.randn({4})}, kOpTol);
  unary("global_avg_pool", [](G& g, Var x) { return ad::global_avg_pool(g, x); }, s.randn({2, 3, 4, 5}));
  binary("mul_channels", [](G& g, Var x, Var y) { return ad::mul_channels(g, x, y); }, s.randn({2, 3, 4, 4}),
         s.randn({2, 3}));
  unary("softmax_rows", [](G& g, Var x) { return ad::softmax(g, x, 1); }, s.randn({4, 6}, 2.0));
  unary("softmax_cols", [](G& g, Var x) { return ad::softmax(g, x, 0); }, s.randn({4, 6}, 2.0));
  s.check("mse", [](G& g, const std::vector<Var>& v) { return ad::mse(g, v[0], v[1]); },
          {s.randn({3, 4}), s.randn({3, 4})}, kOpTol);
  s.check("sum", [](G& g, const std::vector<Var>& v) { return ad::sum(g, ad::mul(g, v[0], v[0])); }, {s.randn({3, 4})},
          kOpTol);
  s.check("mean", [](G& g, const std::vector<Var>& v) { return ad::mean(g, ad::mul(g, v[0], v[0])); },
          {s.randn({3, 4})}, kOpTol);
  binary("matmul", [](G& g, Var x, Var y) { return ad::matmul(g, x, y); }, s.randn({3, 4}), s.randn({4, 5}));
  unary("transpose", [](G& g, Var x) { return ad::transpose(g, x); }, s.randn({3, 4}));
  unary("l2_normalize_rows", [](G& g, Var x) { return ad::l2_normalize_rows(g, x); }, s.randn({4, 5}));
  unary("row_norms", [](G& g, Var x) { return ad::row_norms(g, x); }, s.randn({4, 5}));
  unary("gather_rows", [](G& g, Var x) { return ad::gather_rows(g, x, {2, 0, 2, 3}); }, s.randn({4, 3}));
  unary("gather_flat", [](G& g, Var x) { return ad::gather_flat(g, x, {5, 0, 11, 5}); }, s.randn({3, 4}));
  unary("reshape", [](G& g, Var x) { return ad::reshape(g, x, {6, 2}); }, s.randn({3, 4}));
  unary("permute", [](G& g, Var x) { return ad::permute(g, x, {2, 0, 3, 1}); }, s.randn({2, 3, 4, 5}));
  unary("narrow", [](G& g, Var x) { return ad::narrow(g, x, 1, 1, 2); }, s.randn({2, 4, 3}));
  unary("space_to_depth", [](G& g, Var x) { return ad::space_to_depth(g, x, 2); }, s.randn({2, 3, 4, 6}));
  unary("depth_to_space", [](G& g, Var x) { return ad::depth_to_space(g, x, 2); }, s.randn({2, 8, 3, 2}));
  unary("shuffle_width", [](G& g, Var x) { return ad::shuffle_width(g, x, 3); }, s.randn({2, 6, 3, 4}));
  unary("upsample_linear_width", [](G& g, Var x) { return ad::upsample_linear_width(g, x, 3); }, s.randn({2, 1, 3, 5}));
  unary("haar_level", [](G& g, Var x) { return ad::haar_level(g, x); }, s.randn({2, 5, 6}));
  binary("interleave_slices", [](G& g, Var x, Var y) { return ad::interleave_slices(g, x, y, 3); },
         s.randn({2, 3, 2, 2}), s.randn({4, 2, 2, 2}));

  // Residual block with channel attention, all parameters random.
  {
    ParamSet<float> shape_src;
    {
      NetConfig c = tiny_net();
      shape_src = build_pint(c, 1);
    }
    ParamSet<double> block;
    const std::string pre = "pint.group1.block0";
    for (const auto& n : {".conv1.w", ".conv1.b", ".conv2.w", ".conv2.b", ".ca.fc1.w", ".ca.fc1.b", ".ca.fc2.w",
                          ".ca.fc2.b"})
      block.add(pre + n, s.randn(shape_src.at(pre + n).shape(), 0.5));
    std::vector<TD> inputs{s.randn({2, 4, 5, 5})};
    for (std::size_t i = 0; i < block.size(); ++i) inputs.push_back(block.at(i));
    s.check("residual_block",
            [&](G& g, const std::vector<Var>& v) {
              BoundParams<double> p(block, std::vector<Var>(v.begin() + 1, v.end()));
              return s.project(g, residual_block(g, p, pre, v[0]));
            },
            inputs, kOpTol);
  }

  // Memory read: both the reconstruction and the weights, w.r.t. E3 and M.
  s.check("memory_read",
          [&](G& g, const std::vector<Var>& v) {
            const ReadResult r = memory_read(g, v[0], v[1]);
            return ad::add(g, s.project(g, r.recon), s.project(g, r.weights));
          },
          {s.randn({2, 4, 2, 3}), s.randn({5, 4})}, kOpTol);

  // Regularizers away from ties and hinge corners: each E3 row sits near one
  // item and clearly farther from the others.
  {
    const int m = 4, d = 3, p = 6;
    TD bank = s.randn({m, d});
    TD e3({p, d});
    for (int i = 0; i < p; ++i)
      for (int c = 0; c < d; ++c) e3.at(i, c) = 3.0 * bank.at(i % m, c) + 0.2 * s.randn({1})[0];
    // feature map [1, d, 1, p]
    TD fmap({1, d, 1, p});
    for (int i = 0; i < p; ++i)
      for (int c = 0; c < d; ++c) fmap.at(0, c, 0, i) = e3.at(i, c);
    s.check("memory_compactness",
            [&](G& g, const std::vector<Var>& v) {
              return memory_regularizers(g, memory_read(g, v[0], v[1]), v[1], 1.0).compactness;
            },
            {fmap, bank}, kOpTol);
    s.check("memory_separateness",
            [&](G& g, const std::vector<Var>& v) {
              return memory_regularizers(g, memory_read(g, v[0], v[1]), v[1], 50.0).separateness;
            },
            {fmap, bank}, kOpTol);
  }

  for (ViewAxis view : {ViewAxis::axial, ViewAxis::coronal, ViewAxis::sagittal}) {
    TD target = s.randn({1, 2, 8, 8});
    s.check("internal_loss_" + std::string(to_string(view)),
            [&, view](G& g, const std::vector<Var>& v) {
              return internal_loss(g, v[0], g.constant(target), view, true);
            },
            {s.randn({1, 2, 8, 8})}, kOpTol);
  }
  {
    TD a = s.randn({1, 3, 4, 4}), b = s.randn({1, 3, 4, 4});
    const auto set = select_consistent<double>(a.values(), b.values(), 3, 0.4, true, 2);
    s.check("cmd_loss", [&](G& g, const std::vector<Var>& v) { return cmd_loss(g, v[0], v[1], set.indices); }, {a, b},
            kOpTol);
  }

  if (full) {
    const NetConfig cfg = tiny_net();
    const ParamSet<double> sint = randomized(build_sint(cfg, 11), s);
    const ParamSet<double> pint = randomized(build_pint(cfg, 12), s);
    TD bank = MemoryBank::random(3, cfg.base_channels, 13).items.cast<double>();
    std::vector<TD> inputs{s.randn({1, 1, 16, 16}), s.randn({1, 1, 16, 16}), bank};
    for (std::size_t i = 0; i < sint.size(); ++i) inputs.push_back(sint.at(i));
    s.check("sint_network",
            [&](G& g, const std::vector<Var>& v) {
              BoundParams<double> p(sint, std::vector<Var>(v.begin() + 3, v.end()));
              return s.project(g, sint_forward(g, p, v[2], v[0], v[1], cfg).slices);
            },
            inputs, kNetTol, 1e-6, 6);
    std::vector<TD> pinputs{s.randn({2, 1, 8, 5})};
    for (std::size_t i = 0; i < pint.size(); ++i) pinputs.push_back(pint.at(i));
    s.check("pint_network",
            [&](G& g, const std::vector<Var>& v) {
              BoundParams<double> p(pint, std::vector<Var>(v.begin() + 1, v.end()));
              return s.project(g, pint_images(g, p, v[0], cfg));
            },
            pinputs, kNetTol, 1e-6, 6);
  }
  return s.cases;
}

}  // namespace ctsynth
