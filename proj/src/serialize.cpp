#include "dsc/serialize.hpp"

#include <cstdint>
#include <fstream>

#include "dsc/errors.hpp"

namespace dsc {

nlohmann::json tensors_to_json(const std::vector<TensorPtr>& params) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& p : params) {
    if (p->name.empty()) throw DataError("tensor serialization: unnamed tensor");
    if (tensors.contains(p->name)) {
      throw DataError("tensor serialization: duplicate name " + p->name);
    }
    tensors[p->name] = {{"shape", {p->rows(), p->cols()}}, {"data", p->v.d}};
  }
  return {{"format", kTensorFormatTag}, {"tensors", tensors}};
}

void tensors_from_json(const nlohmann::json& j, const std::vector<TensorPtr>& params) {
  if (!j.contains("format") || j["format"] != kTensorFormatTag) {
    throw DataError("tensor bundle: missing or unsupported format tag");
  }
  const auto& tensors = j.at("tensors");
  for (const auto& p : params) {
    if (!tensors.contains(p->name)) {
      throw DataError("tensor bundle: missing tensor " + p->name);
    }
    const auto& t = tensors.at(p->name);
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p->rows() || shape[1] != p->cols()) {
      throw DataError("tensor bundle: shape mismatch for " + p->name);
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != p->v.size()) {
      throw DataError("tensor bundle: data length mismatch for " + p->name);
    }
    p->v.d = data;
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string fingerprint(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dsc
