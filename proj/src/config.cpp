#include "gradformer/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace gradformer {

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stage_channels = {16, 32, 48, 64};
  c.stage_depths = {1, 1, 1, 1};
  c.decoder_width = 32;
  return c;
}

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> out;
  if (heads <= 0) out.push_back("heads must be positive");
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    const auto c = stage_channels[i];
    const auto unit = 4 * static_cast<std::int64_t>(std::max(heads, 1));
    if (c <= 0 || c % 16 != 0 || c % unit != 0) {
      out.push_back("stage_channels[" + std::to_string(i) + "] = " + std::to_string(c) + " is not divisible by " +
                    (unit > 16 && unit % 16 == 0 ? std::to_string(unit) : "16 and 4 * heads"));
    }
    if (stage_depths[i] < 0) out.push_back("stage_depths[" + std::to_string(i) + "] must be nonnegative");
  }
  if (eps < 0.0 || eps > 1e-5) out.push_back("eps must lie in [0, 1e-5]");
  if (mlp_ratio <= 0) out.push_back("mlp_ratio must be positive");
  if (decoder_width <= 0) out.push_back("decoder_width must be positive");
  if (num_classes != 2) out.push_back("num_classes must be 2");
  if (upsample_kernel <= 0 || upsample_padding < 0 || upsample_kernel - 2 * upsample_padding != 2) {
    out.push_back("upsample_kernel - 2 * upsample_padding must equal 2 so each upsampler doubles resolution");
  }
  return out;
}

namespace {

void throw_violations(const std::string& what, const std::vector<std::string>& v) {
  if (v.empty()) return;
  std::string msg = "invalid " + what + ":";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

}  // namespace

void ModelConfig::validate() const { throw_violations("model config", violations()); }

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> out;
  if (!(lr >= 0.0)) out.push_back("lr must be nonnegative");
  for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= decay_epochs[i - 1]) out.push_back("decay_epochs must be strictly increasing");
  }
  if (!(decay_factor > 0.0)) out.push_back("decay_factor must be positive");
  if (epochs < 0) out.push_back("epochs must be nonnegative");
  if (batch < 1) out.push_back("batch must be at least 1");
  if (weight_decay < 0.0) out.push_back("weight_decay must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) out.push_back("adam_eps must be positive");
  return out;
}

void TrainConfig::validate() const { throw_violations("train config", violations()); }

std::string to_string(AttentionKind kind) { return kind == AttentionKind::kDifferential ? "differential" : "simple"; }

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy:
      return "cross_entropy";
    case LossKind::kFocal:
      return "focal";
    case LossKind::kMiou:
      return "miou";
  }
  return "cross_entropy";
}

AttentionKind parse_attention_kind(const std::string& text) {
  if (text == "differential" || text == "diff") return AttentionKind::kDifferential;
  if (text == "simple") return AttentionKind::kSimple;
  throw ConfigError("unknown attention kind '" + text + "' (expected differential|simple)");
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "cross_entropy" || text == "ce") return LossKind::kCrossEntropy;
  if (text == "focal") return LossKind::kFocal;
  if (text == "miou") return LossKind::kMiou;
  throw ConfigError("unknown loss '" + text + "' (expected ce|focal|miou)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& text) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + text + "'");
  return v;
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError("expected a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("expected a boolean, got '" + text + "'");
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  if (items.empty() || (items.size() == 1 && items[0].empty())) return {};
  return items;
}

template <typename Int, std::size_t N>
std::array<Int, N> parse_fixed_list(const std::string& text) {
  const auto items = parse_list(text);
  if (items.size() != N) {
    throw ConfigError("expected " + std::to_string(N) + " comma-separated values, got " + std::to_string(items.size()));
  }
  std::array<Int, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_int<Int>(items[i]);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Range>
std::string join(const Range& r) {
  std::string out;
  for (const auto& v : r) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"stage_channels",
       [](RunConfig& c, const std::string& v) { c.model.stage_channels = parse_fixed_list<std::int64_t, 4>(v); }},
      {"stage_depths", [](RunConfig& c, const std::string& v) { c.model.stage_depths = parse_fixed_list<int, 4>(v); }},
      {"heads", [](RunConfig& c, const std::string& v) { c.model.heads = parse_int<int>(v); }},
      {"lambda_init", [](RunConfig& c, const std::string& v) { c.model.lambda_init = parse_double(v); }},
      {"eps", [](RunConfig& c, const std::string& v) { c.model.eps = parse_double(v); }},
      {"mlp_ratio", [](RunConfig& c, const std::string& v) { c.model.mlp_ratio = parse_int<int>(v); }},
      {"decoder_width", [](RunConfig& c, const std::string& v) { c.model.decoder_width = parse_int<std::int64_t>(v); }},
      {"num_classes", [](RunConfig& c, const std::string& v) { c.model.num_classes = parse_int<int>(v); }},
      {"attention", [](RunConfig& c, const std::string& v) { c.model.attention = parse_attention_kind(v); }},
      {"upsample_kernel", [](RunConfig& c, const std::string& v) { c.model.upsample_kernel = parse_int<int>(v); }},
      {"upsample_padding", [](RunConfig& c, const std::string& v) { c.model.upsample_padding = parse_int<int>(v); }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.model.seed = parse_int<std::uint64_t>(v);
         c.train.seed = c.model.seed;
       }},
      {"train_seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_int<std::uint64_t>(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_double(v); }},
      {"decay_epochs",
       [](RunConfig& c, const std::string& v) {
         c.train.decay_epochs.clear();
         for (const auto& item : parse_list(v)) c.train.decay_epochs.push_back(parse_int<int>(item));
       }},
      {"decay_factor", [](RunConfig& c, const std::string& v) { c.train.decay_factor = parse_double(v); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_int<int>(v); }},
      {"batch", [](RunConfig& c, const std::string& v) { c.train.batch = parse_int<int>(v); }},
      {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_double(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = parse_double(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = parse_double(v); }},
      {"adam_eps", [](RunConfig& c, const std::string& v) { c.train.adam_eps = parse_double(v); }},
      {"loss", [](RunConfig& c, const std::string& v) { c.train.loss = parse_loss_kind(v); }},
      {"augment_flips", [](RunConfig& c, const std::string& v) { c.train.augment_flips = parse_bool(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + body + "'");
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

RunConfig resolve_config(const std::string& name_or_path) {
  if (name_or_path == "default") return {};
  if (name_or_path == "tiny") {
    RunConfig c;
    c.model = ModelConfig::tiny();
    return c;
  }
  return load_config_file(name_or_path);
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream os;
  os << "stage_channels = " << join(c.model.stage_channels) << '\n'
     << "stage_depths = " << join(c.model.stage_depths) << '\n'
     << "heads = " << c.model.heads << '\n'
     << "lambda_init = " << format_double(c.model.lambda_init) << '\n'
     << "eps = " << format_double(c.model.eps) << '\n'
     << "mlp_ratio = " << c.model.mlp_ratio << '\n'
     << "decoder_width = " << c.model.decoder_width << '\n'
     << "num_classes = " << c.model.num_classes << '\n'
     << "attention = " << to_string(c.model.attention) << '\n'
     << "upsample_kernel = " << c.model.upsample_kernel << '\n'
     << "upsample_padding = " << c.model.upsample_padding << '\n'
     << "seed = " << c.model.seed << '\n'
     << "train_seed = " << c.train.seed << '\n'
     << "lr = " << format_double(c.train.lr) << '\n'
     << "decay_epochs = " << join(c.train.decay_epochs) << '\n'
     << "decay_factor = " << format_double(c.train.decay_factor) << '\n'
     << "epochs = " << c.train.epochs << '\n'
     << "batch = " << c.train.batch << '\n'
     << "weight_decay = " << format_double(c.train.weight_decay) << '\n'
     << "beta1 = " << format_double(c.train.beta1) << '\n'
     << "beta2 = " << format_double(c.train.beta2) << '\n'
     << "adam_eps = " << format_double(c.train.adam_eps) << '\n'
     << "loss = " << to_string(c.train.loss) << '\n'
     << "augment_flips = " << (c.train.augment_flips ? "true" : "false") << '\n';
  return os.str();
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.stage_channels == b.stage_channels && a.stage_depths == b.stage_depths && a.heads == b.heads &&
         a.lambda_init == b.lambda_init && a.eps == b.eps && a.mlp_ratio == b.mlp_ratio &&
         a.decoder_width == b.decoder_width && a.num_classes == b.num_classes && a.attention == b.attention &&
         a.upsample_kernel == b.upsample_kernel && a.upsample_padding == b.upsample_padding && a.seed == b.seed;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.lr == b.lr && a.decay_epochs == b.decay_epochs && a.decay_factor == b.decay_factor &&
         a.epochs == b.epochs && a.batch == b.batch && a.weight_decay == b.weight_decay && a.beta1 == b.beta1 &&
         a.beta2 == b.beta2 && a.adam_eps == b.adam_eps && a.seed == b.seed && a.loss == b.loss &&
         a.augment_flips == b.augment_flips;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.model == b.model && a.train == b.train; }

}  // namespace gradformer
