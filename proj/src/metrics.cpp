#include "gradformer/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "gradformer/errors.hpp"

namespace gradformer {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt) || pred.values.size() != gt.values.size()) {
    throw DimensionError("confusion: prediction and ground-truth masks differ in shape");
  }
  std::int64_t n[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const auto p = pred.values[i];
    const auto g = gt.values[i];
    if (p > 1 || g > 1) throw ContractError("confusion: mask values must be 0 or 1");
    ++n[p][g];
  }
  return {n[1][1], n[1][0], n[0][1], n[0][0]};
}

double f1(const ConfusionCounts& c) {
  const auto den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double iou(const ConfusionCounts& c) {
  const auto den = c.tp + c.fp + c.fn;
  return den == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double oa(const ConfusionCounts& c) {
  const auto total = c.total();
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

MetricsReport MetricsReport::from_counts(const ConfusionCounts& c) {
  return {gradformer::f1(c), gradformer::iou(c), gradformer::oa(c), c};
}

std::string format_report(const MetricsReport& r) {
  char buf[64];
  std::ostringstream os;
  auto real = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << key << '=' << buf << '\n';
  };
  real("f1", r.f1);
  real("iou", r.iou);
  real("oa", r.oa);
  os << "tp=" << r.counts.tp << '\n'
     << "fp=" << r.counts.fp << '\n'
     << "fn=" << r.counts.fn << '\n'
     << "tn=" << r.counts.tn << '\n';
  return os.str();
}

MetricsReport parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const auto start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report line without '=': " + line, start);
    if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second) {
      throw FormatError("duplicate report key '" + line.substr(0, eq) + "'", start);
    }
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("report is missing '") + key + "'");
    return it->second;
  };
  auto real = [&](const char* key) {
    const auto& s = get(key);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw FormatError(std::string("bad value for '") + key + "': " + s);
    return v;
  };
  auto count = [&](const char* key) {
    const auto& s = get(key);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v < 0) {
      throw FormatError(std::string("bad count for '") + key + "': " + s);
    }
    return v;
  };
  MetricsReport r;
  r.f1 = real("f1");
  r.iou = real("iou");
  r.oa = real("oa");
  r.counts = {count("tp"), count("fp"), count("fn"), count("tn")};
  return r;
}

}  // namespace gradformer
