#include "synclip/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "synclip/errors.hpp"

namespace synclip {

namespace {

Shape parse_shape(const std::string& s) {
  Shape shape;
  std::string part;
  std::istringstream ss(s);
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
  return shape;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore<float>& params, Adam<float>& opt,
                     const TrainConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_io("cannot create checkpoint directory: " + dir.string());

  std::map<std::string, const TensorF*> arrays;
  std::map<std::string, TensorF> param_copies;
  for (const auto& [name, v] : params.all()) param_copies.emplace("param/" + name, v.tensor());
  for (const auto& [name, t] : param_copies) arrays.emplace(name, &t);
  for (const auto& [name, t] : opt.first_moments()) arrays.emplace("optim/m/" + name, &t);
  for (const auto& [name, t] : opt.second_moments()) arrays.emplace("optim/v/" + name, &t);

  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!manifest || !bin) throw_io("cannot open checkpoint files for write under " + dir.string());

  manifest << "# synclip checkpoint v1\n";
  manifest << "# step = " << params.step() << "\n";
  for (const auto& [key, value] : config_items(cfg)) manifest << "# config " << key << " = " << value << "\n";

  int64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    manifest << name << " " << shape_str(t->shape) << " f32 " << offset << "\n";
    bin.write(reinterpret_cast<const char*>(t->data.data()), std::streamsize(t->data.size() * sizeof(float)));
    offset += int64_t(t->data.size() * sizeof(float));
  }
  if (!manifest || !bin) throw_io("short write while saving checkpoint to " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw_io("cannot open " + (dir / "manifest.txt").string());
  std::ifstream bin(dir / "params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw_io("cannot open " + (dir / "params.bin").string());
  const int64_t bin_size = bin.tellg();
  bin.seekg(0);

  Checkpoint ck;
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line);
      std::string hash, word;
      ss >> hash >> word;
      if (word == "step") {
        std::string eq;
        int64_t step;
        ss >> eq >> step;
        ck.step = step;
      } else if (word == "config") {
        std::string key, eq, value;
        ss >> key >> eq;
        std::getline(ss, value);
        const auto b = value.find_first_not_of(' ');
        ck.config_echo[key] = b == std::string::npos ? "" : value.substr(b);
      }
      continue;
    }
    std::istringstream ss(line);
    Entry e;
    std::string shape_s, dtype;
    ss >> e.name >> shape_s >> dtype >> e.offset;
    if (ss.fail()) throw_io("malformed manifest line: " + line);
    if (dtype != "f32") throw_io("unsupported dtype in manifest: " + dtype);
    e.shape = parse_shape(shape_s);
    entries.push_back(std::move(e));
  }

  int64_t expected = 0;
  for (const auto& e : entries) expected += shape_numel(e.shape) * int64_t(sizeof(float));
  if (expected != bin_size)
    throw_io("params.bin is " + std::to_string(bin_size) + " bytes but the manifest implies " +
             std::to_string(expected) + " (missing " + std::to_string(expected - bin_size) + " bytes)");

  for (const auto& e : entries) {
    TensorF t(e.shape);
    bin.seekg(e.offset);
    bin.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(t.data.size() * sizeof(float)));
    if (!bin) throw_io("short read in params.bin at offset " + std::to_string(e.offset));
    ck.arrays.emplace(e.name, std::move(t));
  }
  return ck;
}

TrainConfig config_from_checkpoint(const Checkpoint& ck) {
  TrainConfig cfg;
  for (const auto& [key, value] : ck.config_echo) config_set(cfg, key, value);
  return cfg;
}

void restore_checkpoint(const Checkpoint& ck, ParamStore<float>& params, Adam<float>& opt) {
  std::vector<std::string> diffs;
  for (const auto& [name, v] : params.all()) {
    auto it = ck.arrays.find("param/" + name);
    if (it == ck.arrays.end()) {
      diffs.push_back("missing in checkpoint: param/" + name + " " + shape_str(v.shape()));
    } else if (it->second.shape != v.shape()) {
      diffs.push_back("shape mismatch: param/" + name + " checkpoint " + shape_str(it->second.shape) +
                      " vs model " + shape_str(v.shape()));
    }
  }
  for (const auto& [name, t] : ck.arrays)
    if (name.rfind("param/", 0) == 0 && !params.contains(name.substr(6)))
      diffs.push_back("unexpected in checkpoint: " + name + " " + shape_str(t.shape));
  if (!diffs.empty()) {
    std::string msg = "checkpoint/config mismatch:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw Error(ErrorKind::config, msg);
  }

  for (const auto& [name, v] : params.all()) v.node()->value = ck.arrays.at("param/" + name).data;
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (const auto& [name, t] : ck.arrays) {
    if (name.rfind("optim/m/", 0) == 0) opt.first_moments().emplace(name.substr(8), t);
    if (name.rfind("optim/v/", 0) == 0) opt.second_moments().emplace(name.substr(8), t);
  }
  params.set_step(ck.step);
}

std::string read_manifest_text(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  if (!f) throw_io("cannot open " + (dir / "manifest.txt").string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace synclip
