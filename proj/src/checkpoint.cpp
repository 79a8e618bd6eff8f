#include "ctsynth/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "ctsynth/binary.hpp"

namespace ctsynth {

namespace {

constexpr const char* kFormat = "ctsynth-ckpt";
constexpr int kVersion = 1;

struct Entry {
  std::string name;
  const Tensor<float>* tensor;
};

std::vector<Entry> entries(const Checkpoint& c) {
  std::vector<Entry> out;
  for (std::size_t i = 0; i < c.sint.size(); ++i) out.push_back({c.sint.names()[i], &c.sint.at(i)});
  for (std::size_t i = 0; i < c.pint.size(); ++i) out.push_back({c.pint.names()[i], &c.pint.at(i)});
  if (!c.bank.items.empty()) out.push_back({"memory.items", &c.bank.items});
  if (c.adam) {
    for (std::size_t i = 0; i < c.adam->m.size(); ++i) out.push_back({"adam.m." + std::to_string(i), &c.adam->m[i]});
    for (std::size_t i = 0; i < c.adam->v.size(); ++i) out.push_back({"adam.v." + std::to_string(i), &c.adam->v[i]});
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, std::ostream& out) {
  nlohmann::ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["config"] = nlohmann::ordered_json::parse(to_json(c.config, -1));
  manifest["step"] = c.step;
  manifest["epoch"] = c.epoch;
  manifest["memory_shape"] = c.bank.items.empty() ? std::vector<int>{} : c.bank.items.shape();
  if (c.adam) {
    manifest["adam"] = {{"step", c.adam->step}, {"beta1", c.adam->beta1}, {"beta2", c.adam->beta2}, {"eps", c.adam->eps}};
  }
  const auto list = entries(c);
  auto& tensors = manifest["tensors"] = nlohmann::ordered_json::array();
  for (const Entry& e : list) tensors.push_back({{"name", e.name}, {"shape", e.tensor->shape()}});
  out << manifest.dump() << '\n';
  for (const Entry& e : list) write_f32le(out, e.tensor->values());
  require(static_cast<bool>(out), ErrorKind::data, "failed writing checkpoint");
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  // Write to a sibling temp file first so a crash never leaves a torn checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::data, "cannot open '" + tmp.string() + "' for writing");
    save_checkpoint(c, out);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::data, "checkpoint: missing manifest");
  Checkpoint c;
  std::vector<std::pair<std::string, Shape>> list;
  try {
    const auto manifest = nlohmann::json::parse(line);
    require(manifest.at("format") == kFormat && manifest.at("version") == kVersion, ErrorKind::data,
            "checkpoint: unsupported format or version");
    c.config = config_from_json(manifest.at("config").dump());
    c.step = manifest.at("step").get<std::int64_t>();
    c.epoch = manifest.at("epoch").get<int>();
    if (manifest.contains("adam")) {
      AdamState a;
      const auto& j = manifest["adam"];
      a.step = j.at("step").get<std::int64_t>();
      a.beta1 = j.at("beta1").get<double>();
      a.beta2 = j.at("beta2").get<double>();
      a.eps = j.at("eps").get<double>();
      c.adam = std::move(a);
    }
    for (const auto& t : manifest.at("tensors")) list.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint: malformed manifest: ") + e.what());
  }
  for (const auto& [name, shape] : list) {
    for (int d : shape) require(d >= 0, ErrorKind::data, "checkpoint: negative dimension in '" + name + "'");
    const std::size_t n = numel(shape);
    std::vector<float> vals = read_f32le(in, n);
    require(vals.size() == n, ErrorKind::data, "checkpoint: truncated payload at '" + name + "'");
    Tensor<float> t(shape, std::move(vals));
    if (name.starts_with("sint.")) {
      c.sint.add(name, std::move(t));
    } else if (name.starts_with("pint.")) {
      c.pint.add(name, std::move(t));
    } else if (name == "memory.items") {
      c.bank.items = std::move(t);
    } else if (name.starts_with("adam.m.") && c.adam) {
      c.adam->m.push_back(std::move(t));
    } else if (name.starts_with("adam.v.") && c.adam) {
      c.adam->v.push_back(std::move(t));
    } else {
      fail(ErrorKind::data, "checkpoint: unexpected tensor '" + name + "'");
    }
  }
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::data, "checkpoint: trailing bytes after payload");
  if (c.adam) require(c.adam->m.size() == c.adam->v.size(), ErrorKind::data, "checkpoint: incomplete Adam state");
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace ctsynth
