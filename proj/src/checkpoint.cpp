#include "forec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "forec/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace forec::model {

namespace {

std::string join_longs(const std::vector<long>& v, char sep) {
  std::ostringstream ss;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) ss << sep;
    ss << v[i];
  }
  return ss.str();
}

std::vector<long> parse_longs(const std::string& s, char sep) {
  std::vector<long> out;
  if (s.empty()) return out;
  std::istringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(std::stol(part));
  return out;
}

}  // namespace

void save_model(const Model& model, const std::string& prefix) {
  std::ofstream manifest(prefix + ".manifest");
  if (!manifest) throw std::runtime_error("cannot write " + prefix + ".manifest");
  std::ofstream payload(prefix + ".payload", std::ios::binary);
  if (!payload) throw std::runtime_error("cannot write " + prefix + ".payload");

  manifest << "# forec-checkpoint v1\n";
  manifest << "# kind " << kind_name(model.kind) << "\n";
  manifest << "# n_users " << model.n_users << "\n";
  manifest << "# n_items " << model.n_items << "\n";
  manifest << "# embed_dim " << model.cfg.embed_dim << "\n";
  manifest << "# tower " << join_longs(model.cfg.tower, ',') << "\n";
  manifest << "# fusion_alpha " << model.cfg.fusion_alpha << "\n";
  manifest << "# init_std " << model.cfg.init_std << "\n";
  manifest << "# k_freeze " << model.k_freeze << "\n";
  manifest << "# head " << join_longs(model.head_widths, ',') << "\n";

  long offset = 0;
  for (const ad::ParamSet::Entry& e : model.params.entries()) {
    manifest << e.name << '\t' << join_longs(e.value.shape(), 'x') << '\t'
             << (e.frozen ? 1 : 0) << '\t' << "f64" << '\t' << offset << '\n';
    const auto& data = e.value.data();
    payload.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    offset += static_cast<long>(data.size() * sizeof(double));
  }
  if (!manifest || !payload) throw std::runtime_error("checkpoint write failed: " + prefix);
}

Model load_model(const std::string& prefix) {
  std::ifstream manifest(prefix + ".manifest");
  if (!manifest) throw std::runtime_error("cannot read " + prefix + ".manifest");
  std::ifstream payload(prefix + ".payload", std::ios::binary);
  if (!payload) throw std::runtime_error("cannot read " + prefix + ".payload");

  Model m;
  std::map<std::string, std::string> meta;
  std::string line;
  std::vector<std::tuple<std::string, std::vector<long>, bool, long>> tensors;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key, value;
      ss >> key;
      std::getline(ss, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      meta[key] = value;
      continue;
    }
    std::istringstream ss(line);
    std::string name, shape_s, frozen_s, dtype, offset_s;
    if (!(ss >> name >> shape_s >> frozen_s >> dtype >> offset_s)) {
      throw std::runtime_error(prefix + ".manifest: malformed tensor line: " + line);
    }
    if (dtype != "f64") throw std::runtime_error(prefix + ".manifest: unsupported dtype " + dtype);
    tensors.emplace_back(name, parse_longs(shape_s, 'x'), frozen_s == "1", std::stol(offset_s));
  }

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) {
      throw std::runtime_error(prefix + ".manifest: missing metadata key " + key);
    }
    return it->second;
  };
  m.kind = kind_from_name(need("kind"));
  m.n_users = std::stol(need("n_users"));
  m.n_items = std::stol(need("n_items"));
  m.cfg.embed_dim = std::stol(need("embed_dim"));
  m.cfg.tower = parse_longs(need("tower"), ',');
  m.cfg.fusion_alpha = std::stod(need("fusion_alpha"));
  m.cfg.init_std = std::stod(need("init_std"));
  m.k_freeze = std::stol(need("k_freeze"));
  m.head_widths = parse_longs(need("head"), ',');

  for (const auto& [name, shape, frozen, offset] : tensors) {
    long n = 1;
    for (const long d : shape) n *= d;
    std::vector<double> values(static_cast<size_t>(n));
    payload.seekg(offset);
    payload.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!payload) {
      throw std::runtime_error(prefix + ".payload: truncated read for tensor " + name);
    }
    m.params.add(name, ad::Tensor(shape, std::move(values)), frozen);
  }
  return m;
}

std::string checkpoint_hash(const std::string& prefix) {
  return hash_string(hash_file(prefix + ".manifest") + hash_file(prefix + ".payload"));
}

}  // namespace forec::model
