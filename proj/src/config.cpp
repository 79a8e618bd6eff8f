#include "ctsynth/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ctsynth {

using nlohmann::ordered_json;

int TrainConfig::sample_slices() const {
  if (slices_per_sample > 0) return slices_per_sample;
  if (net.r == 2 || net.r == 3) return 7;
  return 2 * net.r + 1;
}

void TrainConfig::validate() const {
  net.validate();
  require(memory_items >= 2, ErrorKind::usage, "config: m must be >= 2");
  require(gamma > 0.0 && gamma <= 1.0, ErrorKind::usage, "config: gamma must be in (0, 1]");
  require(passes >= 1, ErrorKind::usage, "config: N must be >= 1");
  require(epochs >= 0, ErrorKind::usage, "config: epochs must be >= 0");
  require(epochs == 0 || (stage1_epochs >= 1 && stage1_epochs <= epochs), ErrorKind::usage,
          "config: stage1_epochs must be in [1, epochs]");
  require(steps_per_epoch >= 1 && batch_size >= 1, ErrorKind::usage, "config: steps_per_epoch and batch_size must be >= 1");
  require(lr > 0.0 && lr_decay > 0.0, ErrorKind::usage, "config: lr and lr_decay must be positive");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0, ErrorKind::usage,
          "config: invalid Adam constants");
  require(patch >= 1 && patch % net.s2d_block == 0, ErrorKind::usage, "config: patch must be a multiple of s2d_block");
  const int s = sample_slices();
  require(s >= net.r + 1 && (s - 1) % net.r == 0, ErrorKind::usage,
          "config: slices_per_sample must be k*r + 1 with k >= 1");
  require(central_fraction > 0.0 && central_fraction <= 1.0, ErrorKind::usage, "config: central_fraction must be in (0, 1]");
  require(degradation.factor == net.r, ErrorKind::usage, "config: degradation factor must equal r");
  require(degradation.noise_sigma >= 0.0, ErrorKind::usage, "config: noise_sigma must be >= 0");
  require(memory_alpha >= 0.0, ErrorKind::usage, "config: memory alpha must be >= 0");
}

namespace {

ordered_json to_object(const TrainConfig& c) {
  ordered_json j;
  j["r"] = c.net.r;
  j["m"] = c.memory_items;
  j["gamma"] = c.gamma;
  j["N"] = c.passes;
  j["cmd_mask_originals"] = c.cmd_mask_originals;
  j["truncate_incremental"] = c.truncate_incremental;
  j["use_memory"] = c.use_memory;
  j["wavelet_loss"] = c.wavelet_loss;
  j["fusion_include_axial_at_originals"] = c.fusion_include_axial_at_originals;
  j["memory_alpha"] = c.memory_alpha;
  j["weights"] = {{"internal_a", c.weights.internal_a}, {"internal_c", c.weights.internal_c},
                  {"internal_s", c.weights.internal_s}, {"cmd", c.weights.cmd},
                  {"memory", c.weights.memory}};
  j["epochs"] = c.epochs;
  j["stage1_epochs"] = c.stage1_epochs;
  j["steps_per_epoch"] = c.steps_per_epoch;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lr_decay"] = c.lr_decay;
  j["lr_decay_epoch"] = c.lr_decay_epoch;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["patch"] = c.patch;
  j["slices_per_sample"] = c.sample_slices();
  j["central_fraction"] = c.central_fraction;
  j["degradation"] = {{"mode", std::string(to_string(c.degradation.mode))},
                      {"blur_sigma", c.degradation.blur_sigma},
                      {"noise_sigma", c.degradation.noise_sigma},
                      {"seed", c.degradation.seed}};
  j["seed"] = c.seed;
  j["net"] = {{"base_channels", c.net.base_channels},
              {"blocks_per_group", c.net.blocks_per_group},
              {"s2d_block", c.net.s2d_block},
              {"attention_reduction", c.net.attention_reduction},
              {"pint_channels", c.net.pint_channels},
              {"pint_groups", c.net.pint_groups},
              {"pint_blocks", c.net.pint_blocks},
              {"global_skip", c.net.global_skip},
              {"pint_keep_originals", c.net.pint_keep_originals}};
  return j;
}

// Reads known keys into `target` and rejects anything else.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j_.is_object(), ErrorKind::usage, "config: " + where_ + " must be a JSON object");
  }

  template <typename V>
  Reader& get(const char* key, V& target) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        target = it->get<V>();
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::usage, "config: bad value for '" + where_ + key + "': " + e.what());
      }
    }
    return *this;
  }

  const nlohmann::json* child(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      require(std::find(seen_.begin(), seen_.end(), key) != seen_.end(), ErrorKind::usage,
              "config: unknown key '" + where_ + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace

std::string to_json(const TrainConfig& cfg, int indent) { return to_object(cfg).dump(indent); }

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::usage, std::string("config: malformed JSON: ") + e.what());
  }
  TrainConfig c;
  Reader top(j, "");
  top.get("r", c.net.r)
      .get("m", c.memory_items)
      .get("gamma", c.gamma)
      .get("N", c.passes)
      .get("cmd_mask_originals", c.cmd_mask_originals)
      .get("truncate_incremental", c.truncate_incremental)
      .get("use_memory", c.use_memory)
      .get("wavelet_loss", c.wavelet_loss)
      .get("fusion_include_axial_at_originals", c.fusion_include_axial_at_originals)
      .get("memory_alpha", c.memory_alpha)
      .get("epochs", c.epochs)
      .get("stage1_epochs", c.stage1_epochs)
      .get("steps_per_epoch", c.steps_per_epoch)
      .get("batch_size", c.batch_size)
      .get("lr", c.lr)
      .get("lr_decay", c.lr_decay)
      .get("lr_decay_epoch", c.lr_decay_epoch)
      .get("adam_beta1", c.adam_beta1)
      .get("adam_beta2", c.adam_beta2)
      .get("adam_eps", c.adam_eps)
      .get("patch", c.patch)
      .get("slices_per_sample", c.slices_per_sample)
      .get("central_fraction", c.central_fraction)
      .get("seed", c.seed);
  c.degradation.factor = c.net.r;
  if (const auto* w = top.child("weights")) {
    Reader rw(*w, "weights.");
    rw.get("internal_a", c.weights.internal_a)
        .get("internal_c", c.weights.internal_c)
        .get("internal_s", c.weights.internal_s)
        .get("cmd", c.weights.cmd)
        .get("memory", c.weights.memory)
        .finish();
  }
  if (const auto* d = top.child("degradation")) {
    Reader rd(*d, "degradation.");
    std::string mode(to_string(c.degradation.mode));
    rd.get("mode", mode).get("blur_sigma", c.degradation.blur_sigma).get("noise_sigma", c.degradation.noise_sigma);
    rd.get("seed", c.degradation.seed).finish();
    c.degradation.mode = parse_degradation(mode);
  }
  if (const auto* n = top.child("net")) {
    Reader rn(*n, "net.");
    rn.get("base_channels", c.net.base_channels)
        .get("blocks_per_group", c.net.blocks_per_group)
        .get("s2d_block", c.net.s2d_block)
        .get("attention_reduction", c.net.attention_reduction)
        .get("pint_channels", c.net.pint_channels)
        .get("pint_groups", c.net.pint_groups)
        .get("pint_blocks", c.net.pint_blocks)
        .get("global_skip", c.net.global_skip)
        .get("pint_keep_originals", c.net.pint_keep_originals)
        .finish();
  }
  top.finish();
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace ctsynth
