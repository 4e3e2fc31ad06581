#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "morphalign/error.hpp"
#include "morphalign/scoring.hpp"

#ifndef MORPHALIGN_VERSION
#define MORPHALIGN_VERSION "0.0.0"
#endif

namespace morphalign::report {

using Json = nlohmann::ordered_json;

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string file_sha256(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read '" + p.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(data);
}

// Four decimals, fixed notation.
inline std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// UTC ISO-8601. SOURCE_DATE_EPOCH, when set, pins the value.
inline std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command_line;
  std::string config_hash;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string tool_version = MORPHALIGN_VERSION;
  std::string timestamp;
  std::map<std::string, std::size_t> item_counts;  // language -> items

  Json to_json() const {
    Json j;
    j["command_line"] = command_line;
    j["config_hash"] = config_hash;
    j["input_digests"] = Json::object();
    for (const auto& [k, v] : input_digests) j["input_digests"][k] = v;
    j["tool_version"] = tool_version;
    j["timestamp"] = timestamp;
    j["item_counts"] = Json::object();
    for (const auto& [k, v] : item_counts) j["item_counts"][k] = v;
    return j;
  }
};

inline std::string config_hash(const Json& config) { return sha256_hex(config.dump()).substr(0, 16); }

inline Json config_to_json(const EvalConfig& c) {
  Json j;
  j["frequency_scaling"] = c.frequency_scaling;
  j["include_single_token"] = c.include_single_token;
  j["condition"] = c.condition();
  j["breakdown_keys"] = c.breakdown_keys;
  j["context_mode"] = to_string(c.context_mode);
  return j;
}

inline Json bundle_to_json(const MetricsBundle& m) {
  Json j;
  j["boundary_precision_macro"] = m.boundary_precision_macro;
  j["boundary_recall_macro"] = m.boundary_recall_macro;
  j["subword_precision_micro"] = m.subword_precision_micro;
  j["subword_recall_micro"] = m.subword_recall_micro;
  j["subword_f1_micro"] = m.subword_f1_micro;
  j["subword_precision_macro"] = m.subword_precision_macro;
  j["subword_recall_macro"] = m.subword_recall_macro;
  j["subword_f1_macro"] = m.subword_f1_macro;
  j["n_items_scored"] = m.n_items_scored;
  j["n_items_skipped"] = m.n_items_skipped;
  Json sd;
  sd["estimator"] = "weighted per-item standard deviation";
  sd["boundary_precision_macro"] = m.boundary_precision_sd;
  sd["boundary_recall_macro"] = m.boundary_recall_sd;
  sd["subword_precision_macro"] = m.subword_precision_sd;
  sd["subword_recall_macro"] = m.subword_recall_sd;
  sd["subword_f1_macro"] = m.subword_f1_sd;
  j["sd"] = sd;
  Json counts;
  counts["subword_tp"] = m.subword_tp;
  counts["subword_fp"] = m.subword_fp;
  counts["subword_fn"] = m.subword_fn;
  counts["boundary_tp"] = m.boundary_tp;
  counts["boundary_fp"] = m.boundary_fp;
  counts["boundary_fn"] = m.boundary_fn;
  j["weighted_counts"] = counts;
  return j;
}

inline Json correlation_to_json(const stats::Correlation& c) {
  Json j;
  j["rho"] = c.rho;
  j["p_value"] = c.p_value;
  j["degenerate"] = c.degenerate;
  j["n"] = c.n;
  return j;
}

inline const std::vector<std::string>& score_csv_header() {
  static const std::vector<std::string> header = {
      "language", "tokenizer", "context", "frequency_scaling", "include_single_token",
      "boundary_precision_macro", "boundary_recall_macro",
      "subword_precision_micro", "subword_recall_micro", "subword_f1_micro",
      "subword_precision_macro", "subword_recall_macro", "subword_f1_macro",
      "n_items", "n_skipped", "fertility", "ctc"};
  return header;
}

}  // namespace morphalign::report
