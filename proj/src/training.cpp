#include "ctsynth/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "ctsynth/networks.hpp"
#include "ctsynth/ops.hpp"

namespace ctsynth {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Model init_model(const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  m.sint = build_sint(cfg.net, derive_seed(cfg.seed, 1));
  m.pint = build_pint(cfg.net, derive_seed(cfg.seed, 2));
  if (cfg.use_memory) m.bank = MemoryBank::random(cfg.memory_items, cfg.net.base_channels, derive_seed(cfg.seed, 3));
  return m;
}

std::pair<int, int> crop_start_range(int n, int patch, double central_fraction) {
  require(n >= patch, ErrorKind::shape,
          "volume extent " + std::to_string(n) + " is smaller than the crop size " + std::to_string(patch));
  const int region = std::clamp(static_cast<int>(std::lround(central_fraction * n)), patch, n);
  const int first = (n - region) / 2;
  return {first, first + region - patch};
}

std::vector<Volume> sample_batch(const std::vector<Volume>& volumes, const TrainConfig& cfg, std::mt19937_64& rng) {
  require(!volumes.empty(), ErrorKind::data, "sample_batch: no training volumes");
  const int patch = cfg.patch, depth = cfg.sample_slices();
  std::vector<Volume> out;
  out.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int k = 0; k < cfg.batch_size; ++k) {
    const auto vi = std::uniform_int_distribution<std::size_t>(0, volumes.size() - 1)(rng);
    const Volume& v = volumes[vi];
    require(v.slices() >= depth, ErrorKind::shape,
            "training volume has " + std::to_string(v.slices()) + " slices, crops need " + std::to_string(depth));
    const auto [y_lo, y_hi] = crop_start_range(v.height(), patch, cfg.central_fraction);
    const auto [x_lo, x_hi] = crop_start_range(v.width(), patch, cfg.central_fraction);
    const int y0 = std::uniform_int_distribution<int>(y_lo, y_hi)(rng);
    const int x0 = std::uniform_int_distribution<int>(x_lo, x_hi)(rng);
    const int z0 = std::uniform_int_distribution<int>(0, v.slices() - depth)(rng);
    std::vector<float> vox(static_cast<std::size_t>(patch) * patch * depth);
    std::size_t i = 0;
    for (int z = 0; z < depth; ++z)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) vox[i++] = v.at(y0 + y, x0 + x, z0 + z);
    out.emplace_back(patch, patch, depth, std::move(vox), v.meta());
  }
  return out;
}

Volume subsample(const Volume& v, int r) {
  DegradationSpec spec;
  spec.mode = DegradationMode::direct_subsample;
  spec.factor = r;
  return degrade(v, spec);
}

namespace {

Tensor<float> stack(const std::vector<Volume>& vols) {
  const Volume& f = vols.front();
  std::vector<float> data;
  data.reserve(vols.size() * f.voxels().size());
  for (const Volume& v : vols) {
    require(v.same_shape(f), ErrorKind::shape, "batch volumes must share one shape");
    data.insert(data.end(), v.voxels().begin(), v.voxels().end());
  }
  return Tensor<float>({static_cast<int>(vols.size()), f.slices(), f.height(), f.width()}, std::move(data));
}

// Per-sample consistency sets, offset into the flattened batch.
std::vector<std::int64_t> batch_consistency(const Tensor<float>& a, const Tensor<float>& b, const TrainConfig& cfg) {
  const int batch = a.dim(0), slices = a.dim(1);
  const std::size_t per = a.size() / static_cast<std::size_t>(batch);
  std::vector<std::int64_t> out;
  for (int k = 0; k < batch; ++k) {
    const std::size_t off = static_cast<std::size_t>(k) * per;
    auto set = select_consistent<float>(a.values().subspan(off, per), b.values().subspan(off, per), slices, cfg.gamma,
                                        cfg.cmd_mask_originals, cfg.r());
    for (std::int64_t i : set.indices) out.push_back(i + static_cast<std::int64_t>(off));
  }
  return out;
}

double scalar(const ad::Graph<float>& g, ad::Var v) { return static_cast<double>(g.value(v)[0]); }

void renormalize_rows(Tensor<float>& m) {
  const int rows = m.dim(0), d = m.dim(1);
  for (int z = 0; z < rows; ++z) {
    float* row = m.data() + static_cast<std::size_t>(z) * d;
    double n = 0.0;
    for (int c = 0; c < d; ++c) n += static_cast<double>(row[c]) * row[c];
    n = std::sqrt(n);
    require(n > 0.0 && std::isfinite(n), ErrorKind::numerical, "memory item collapsed to zero");
    for (int c = 0; c < d; ++c) row[c] = static_cast<float>(row[c] / n);
  }
}

}  // namespace

LossReport train_step(Model& model, AdamState& adam, const std::vector<Volume>& batch, const TrainConfig& cfg,
                      bool stage2, double lr) {
  require(!batch.empty(), ErrorKind::data, "train_step: empty batch");
  const int r = cfg.r();
  const NetConfig& net = cfg.net;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<Volume> lowres;
  for (const Volume& v : batch) lowres.push_back(subsample(v, r));

  ad::Graph<float> g;
  BoundParams<float> ps(g, model.sint, true);
  BoundParams<float> pp(g, model.pint, true);
  const bool memory = cfg.use_memory && !model.bank.items.empty();
  ad::Var bank = memory ? g.parameter(model.bank.items) : ad::Var{};
  ad::Var full = g.constant(stack(batch));
  ad::Var down = g.constant(stack(lowres));

  LossReport rep;
  const auto sv = sint_volume(g, ps, bank, down, net);
  ad::Var oc = pint_volume(g, pp, down, ViewAxis::coronal, net);
  ad::Var os = pint_volume(g, pp, down, ViewAxis::sagittal, net);
  ad::Var la = internal_loss(g, sv.volume, full, ViewAxis::axial, cfg.wavelet_loss);
  ad::Var lc = internal_loss(g, oc, full, ViewAxis::coronal, cfg.wavelet_loss);
  ad::Var ls = internal_loss(g, os, full, ViewAxis::sagittal, cfg.wavelet_loss);
  const LossWeights& w = cfg.weights;
  ad::Var total = ad::add(g, ad::add(g, ad::scale(g, la, w.internal_a), ad::scale(g, lc, w.internal_c)),
                          ad::scale(g, ls, w.internal_s));
  rep.int_a = scalar(g, la);
  rep.int_c = scalar(g, lc);
  rep.int_s = scalar(g, ls);

  Tensor<float> updated_bank;
  if (memory) {
    const auto regs = memory_regularizers(g, sv.pairs.read, bank, cfg.memory_alpha);
    ad::Var com = ad::scale(g, regs.compactness, inv_b);
    ad::Var sep = ad::scale(g, regs.separateness, inv_b);
    total = ad::add(g, total, ad::scale(g, ad::add(g, com, sep), w.memory));
    rep.com = scalar(g, com);
    rep.sep = scalar(g, sep);
    // Out-of-graph accumulation of the step's patterns; uses the bank as read.
    updated_bank = memory_update(model.bank.items, g.value(sv.pairs.read.features), sv.pairs.read.z_pos);
  }

  if (stage2) {
    ad::Var cur_a = full, cur_c = full, cur_s = full;
    std::vector<ad::Var> terms_c, terms_s;
    for (int n = 1; n <= cfg.passes; ++n) {
      if (n > 1 && cfg.truncate_incremental) {
        cur_a = g.constant(g.value(cur_a));
        cur_c = g.constant(g.value(cur_c));
        cur_s = g.constant(g.value(cur_s));
      }
      cur_a = sint_volume(g, ps, bank, cur_a, net).volume;
      cur_c = pint_volume(g, pp, cur_c, ViewAxis::coronal, net);
      cur_s = pint_volume(g, pp, cur_s, ViewAxis::sagittal, net);
      const auto set_c = batch_consistency(g.value(cur_a), g.value(cur_c), cfg);
      const auto set_s = batch_consistency(g.value(cur_a), g.value(cur_s), cfg);
      ad::Var tc = cmd_loss(g, cur_a, cur_c, set_c);
      ad::Var ts = cmd_loss(g, cur_a, cur_s, set_s);
      rep.cmd_c_passes.push_back(scalar(g, tc));
      rep.cmd_s_passes.push_back(scalar(g, ts));
      terms_c.push_back(tc);
      terms_s.push_back(ts);
    }
    const double inv_n = 1.0 / cfg.passes;
    ad::Var cmd_c = ad::scale(g, terms_c.size() == 1 ? terms_c[0] : ad::sum(g, ad::concat(g, terms_c, 0)), inv_n);
    ad::Var cmd_s = ad::scale(g, terms_s.size() == 1 ? terms_s[0] : ad::sum(g, ad::concat(g, terms_s, 0)), inv_n);
    total = ad::add(g, total, ad::scale(g, ad::add(g, cmd_c, cmd_s), w.cmd));
    rep.cmd_c = pass_mean(rep.cmd_c_passes);
    rep.cmd_s = pass_mean(rep.cmd_s_passes);
  }

  rep.total = total_loss(rep, w);
  require(std::isfinite(scalar(g, total)), ErrorKind::numerical, "training loss became non-finite");

  g.backward(total);
  std::vector<Tensor<float>*> params;
  std::vector<Tensor<float>> grads;
  for (std::size_t i = 0; i < model.sint.size(); ++i) {
    params.push_back(&model.sint.at(i));
    grads.push_back(g.grad(ps[i]));
  }
  for (std::size_t i = 0; i < model.pint.size(); ++i) {
    params.push_back(&model.pint.at(i));
    grads.push_back(g.grad(pp[i]));
  }
  if (memory) {
    model.bank.items = std::move(updated_bank);
    params.push_back(&model.bank.items);
    grads.push_back(g.grad(bank));
  }
  adam_step(adam, params, grads, lr);
  if (memory) renormalize_rows(model.bank.items);
  return rep;
}

Volume incremental_interpolate(const std::function<Volume(const Volume&)>& model_fn, const Volume& v, int r, int n) {
  require(n >= 1, ErrorKind::usage, "incremental_interpolate: n must be >= 1");
  Volume cur = v;
  for (int k = 1; k <= n; ++k) {
    const int expected = upsampled_length(cur.slices(), r);
    cur = model_fn(cur);
    require(cur.slices() == expected, ErrorKind::shape,
            "incremental_interpolate: pass " + std::to_string(k) + " produced " + std::to_string(cur.slices()) +
                " slices, expected " + std::to_string(expected));
  }
  return cur;
}

std::string to_json_line(const StepRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["step"] = rec.step;
  j["lr"] = rec.lr;
  j["wall_time"] = rec.wall_seconds;
  const LossReport& l = rec.loss;
  j["loss"] = {{"int_a", l.int_a},   {"int_c", l.int_c},   {"int_s", l.int_s},
               {"cmd_c", l.cmd_c},   {"cmd_s", l.cmd_s},   {"cmd_c_passes", l.cmd_c_passes},
               {"cmd_s_passes", l.cmd_s_passes}, {"com", l.com}, {"sep", l.sep}, {"total", l.total}};
  return j.dump();
}

Checkpoint make_checkpoint(const TrainConfig& cfg, const Model& model, std::int64_t step, int epoch,
                           const AdamState* adam) {
  Checkpoint c;
  c.config = cfg;
  c.sint = model.sint;
  c.pint = model.pint;
  c.bank = model.bank;
  c.step = step;
  c.epoch = epoch;
  if (adam) c.adam = *adam;
  return c;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Volume>& volumes, const TrainOptions& options) {
  cfg.validate();
  require(!volumes.empty(), ErrorKind::data, "train: no training volumes");
  TrainResult res;
  res.adam.beta1 = cfg.adam_beta1;
  res.adam.beta2 = cfg.adam_beta2;
  res.adam.eps = cfg.adam_eps;
  if (options.resume) {
    const Checkpoint& c = *options.resume;
    res.model = {c.sint, c.pint, c.bank};
    res.step = c.step;
    res.epoch = c.epoch;
    if (c.adam) res.adam = *c.adam;
  } else {
    res.model = init_model(cfg);
  }

  auto save = [&](const std::string& name) {
    if (options.out_dir.empty()) return;
    std::filesystem::create_directories(options.out_dir);
    save_checkpoint(make_checkpoint(cfg, res.model, res.step, res.epoch, &res.adam), options.out_dir / name);
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = res.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.lr, cfg.lr_decay, cfg.lr_decay_epoch, epoch);
    const bool stage2 = epoch > cfg.stage1_epochs;
    for (int k = 0; k < cfg.steps_per_epoch; ++k) {
      // Batches depend only on (seed, step), so resumed runs see the same data.
      std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(res.step)));
      const auto batch = sample_batch(volumes, cfg, rng);
      StepRecord rec;
      rec.loss = train_step(res.model, res.adam, batch, cfg, stage2, lr);
      rec.epoch = epoch;
      rec.step = ++res.step;
      rec.lr = lr;
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (options.log) *options.log << to_json_line(rec) << '\n' << std::flush;
      if (options.on_step) options.on_step(rec);
      res.history.push_back(std::move(rec));
    }
    res.epoch = epoch;
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
    save(name);
  }
  save("model.ckpt");
  return res;
}

InferResult infer(const Model& model, const TrainConfig& cfg, const Volume& v, bool fuse_views) {
  require(v.slices() >= 2, ErrorKind::shape, "infer: input needs at least 2 slices");
  InferResult out{sint_volume(model.sint, model.bank, v, cfg.net),
                  pint_volume(model.pint, v, ViewAxis::coronal, cfg.net),
                  pint_volume(model.pint, v, ViewAxis::sagittal, cfg.net), std::nullopt};
  if (fuse_views) out.fused = fuse(out.axial, out.coronal, out.sagittal, cfg.r(), cfg.fusion_include_axial_at_originals);
  return out;
}

}  // namespace ctsynth
