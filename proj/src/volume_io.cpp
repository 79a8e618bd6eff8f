#include "ctsynth/volume_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ctsynth/binary.hpp"

namespace ctsynth {

void write_volume(const Volume& v, std::ostream& out) {
  nlohmann::ordered_json header;
  header["h"] = v.height();
  header["w"] = v.width();
  header["l"] = v.slices();
  header["sy"] = v.spacing().sy;
  header["sx"] = v.spacing().sx;
  header["sz"] = v.spacing().sz;
  header["lo"] = v.range().lo;
  header["hi"] = v.range().hi;
  header["dtype"] = "f32le";
  out << header.dump() << '\n';
  write_f32le(out, v.voxels());
  require(static_cast<bool>(out), ErrorKind::data, "failed writing volume payload");
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::data, "cannot open '" + path.string() + "' for writing");
  write_volume(v, out);
}

Volume read_volume(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::data, "volume file: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("volume file: malformed header: ") + e.what());
  }
  int h = 0, w = 0, l = 0;
  VolumeMeta meta;
  try {
    require(header.value("dtype", std::string()) == "f32le", ErrorKind::data, "volume file: dtype must be f32le");
    h = header.at("h").get<int>();
    w = header.at("w").get<int>();
    l = header.at("l").get<int>();
    meta.spacing = {header.at("sy").get<double>(), header.at("sx").get<double>(), header.at("sz").get<double>()};
    meta.range = {header.at("lo").get<double>(), header.at("hi").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("volume file: malformed header: ") + e.what());
  }
  require(h >= 1 && w >= 1 && l >= 1, ErrorKind::data, "volume file: dimensions must be >= 1");
  const std::size_t count = static_cast<std::size_t>(h) * w * l;
  std::vector<float> vox = read_f32le(in, count);
  require(vox.size() == count, ErrorKind::data,
          "volume file: truncated payload, expected " + std::to_string(count) + " voxels, got " +
              std::to_string(vox.size()));
  for (float x : vox) require(std::isfinite(x), ErrorKind::data, "volume file: payload contains a non-finite voxel");
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::data, "volume file: trailing bytes after payload");
  return Volume(h, w, l, std::move(vox), meta);
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open '" + path.string() + "'");
  return read_volume(in);
}

}  // namespace ctsynth
