#include "dg/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace dg {

namespace {

std::string fmt_acc(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

void emit_split(std::ostringstream& out, const std::string& name, const SplitCounts& s) {
  out << name << "_count = " << s.total << "\n";
  out << name << "_acc25 = " << fmt_acc(s.acc25()) << "\n";
  out << name << "_acc50 = " << fmt_acc(s.acc50()) << "\n";
}

nlohmann::json split_json(const SplitCounts& s) {
  return {{"count", s.total}, {"acc25", s.acc25()}, {"acc50", s.acc50()}};
}

std::string hash_hex(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, cfg.hash());
  return buf;
}

}  // namespace

std::string report_text(const RunConfig& cfg, const std::vector<EvalNumbers>& per_k,
                        const std::string& label) {
  std::ostringstream out;
  out << "label = " << label << "\n";
  out << "config_hash = " << hash_hex(cfg) << "\n";
  out << "seed = " << cfg.seed << "\n";
  for (const auto& n : per_k) {
    out << "\n[k = " << n.k << "]\n";
    out << "scenes = " << n.scenes << "\n";
    emit_split(out, "overall", n.overall);
    emit_split(out, "unique", n.unique);
    emit_split(out, "multiple", n.multiple);
  }
  out << "\n# config echo\n";
  std::istringstream cfg_lines(cfg.to_text());
  for (std::string line; std::getline(cfg_lines, line);) out << "config." << line << "\n";
  return out.str();
}

std::string report_json(const RunConfig& cfg, const std::vector<EvalNumbers>& per_k,
                        const std::string& label) {
  nlohmann::json doc;
  doc["label"] = label;
  doc["config_hash"] = hash_hex(cfg);
  doc["seed"] = cfg.seed;
  doc["config"] = cfg.to_text();
  auto& arr = doc["per_k"] = nlohmann::json::array();
  for (const auto& n : per_k) {
    arr.push_back({{"k", n.k},
                   {"scenes", n.scenes},
                   {"overall", split_json(n.overall)},
                   {"unique", split_json(n.unique)},
                   {"multiple", split_json(n.multiple)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace dg
