#include "avid/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "avid/rng.hpp"
#include "text_io.hpp"

namespace avid {

std::string_view to_string(MiningMode m) { return m == MiningMode::Acsm ? "acsm" : "random"; }
std::string_view to_string(HardMining h) { return h == HardMining::Ambiguity ? "ambiguity" : "off"; }
std::string_view to_string(LibraryMode m) { return m == LibraryMode::Queue ? "queue" : "momentum"; }
std::string_view to_string(UpdateOrder o) {
  return o == UpdateOrder::LibraryFirst ? "library_first" : "classifier_first";
}

namespace {

[[noreturn]] void invalid(std::string_view key, std::string_view why) {
  fail(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "': " + std::string(why));
}

std::size_t as_size(std::string_view key, std::string_view v) {
  try {
    return textio::parse_int<std::size_t>(v);
  } catch (const Error&) {
    invalid(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
}

std::uint64_t as_u64(std::string_view key, std::string_view v) {
  try {
    return textio::parse_int<std::uint64_t>(v);
  } catch (const Error&) {
    invalid(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
}

double as_double(std::string_view key, std::string_view v) {
  try {
    const double x = textio::parse_double(v);
    if (!std::isfinite(x)) invalid(key, "value must be finite");
    return x;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    invalid(key, "expected a number, got '" + std::string(v) + "'");
  }
}

template <class Enum>
Enum as_enum(std::string_view key, std::string_view v,
             std::initializer_list<std::pair<std::string_view, Enum>> options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (name == v) return value;
    allowed += allowed.empty() ? "" : "|";
    allowed += name;
  }
  invalid(key, "expected one of " + allowed + ", got '" + std::string(v) + "'");
}

using Setter = std::function<void(TrainConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  std::string key;
  Setter set;
  Getter get;
};

#define AVID_SIZE(KEY, MEMBER)                                                            \
  Field {                                                                                 \
    KEY, [](TrainConfig& c, std::string_view k, std::string_view v) { c.MEMBER = as_size(k, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.MEMBER); }                     \
  }
#define AVID_DOUBLE(KEY, MEMBER)                                                          \
  Field {                                                                                 \
    KEY, [](TrainConfig& c, std::string_view k, std::string_view v) { c.MEMBER = as_double(k, v); }, \
        [](const TrainConfig& c) { return textio::format_double(c.MEMBER); }              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      AVID_DOUBLE("tau", tau),
      AVID_DOUBLE("momentum", momentum),
      AVID_SIZE("C", num_libraries),
      AVID_SIZE("K", contrastive_size),
      Field{"mining",
            [](TrainConfig& c, std::string_view k, std::string_view v) {
              c.mining = as_enum<MiningMode>(k, v, {{"random", MiningMode::Random},
                                                    {"acsm", MiningMode::Acsm}});
            },
            [](const TrainConfig& c) { return std::string(to_string(c.mining)); }},
      Field{"library_mode",
            [](TrainConfig& c, std::string_view k, std::string_view v) {
              c.library_mode = as_enum<LibraryMode>(k, v, {{"queue", LibraryMode::Queue},
                                                           {"momentum", LibraryMode::Momentum}});
            },
            [](const TrainConfig& c) { return std::string(to_string(c.library_mode)); }},
      AVID_DOUBLE("library_momentum", library_momentum),
      Field{"update_order",
            [](TrainConfig& c, std::string_view k, std::string_view v) {
              c.update_order = as_enum<UpdateOrder>(
                  k, v, {{"library_first", UpdateOrder::LibraryFirst},
                         {"classifier_first", UpdateOrder::ClassifierFirst}});
            },
            [](const TrainConfig& c) { return std::string(to_string(c.update_order)); }},
      Field{"hard_mining",
            [](TrainConfig& c, std::string_view k, std::string_view v) {
              c.hard_mining = as_enum<HardMining>(k, v, {{"off", HardMining::Off},
                                                         {"ambiguity", HardMining::Ambiguity}});
            },
            [](const TrainConfig& c) { return std::string(to_string(c.hard_mining)); }},
      AVID_DOUBLE("warmup_fraction", warmup_fraction),
      AVID_DOUBLE("alpha", alpha),
      AVID_SIZE("batch_size", batch_size),
      AVID_SIZE("epochs", epochs),
      AVID_DOUBLE("lr", lr),
      AVID_DOUBLE("weight_decay", weight_decay),
      AVID_DOUBLE("classifier_lr", classifier_lr),
      AVID_DOUBLE("classifier_init", classifier_init),
      AVID_SIZE("balance_iters", balance_iters),
      AVID_SIZE("hidden_dim", hidden_dim),
      AVID_SIZE("embed_dim", embed_dim),
      AVID_SIZE("probe_every", probe_every),
      AVID_SIZE("probe_steps", probe_steps),
      AVID_DOUBLE("probe_lr", probe_lr),
      AVID_DOUBLE("probe_split", probe_split),
      AVID_SIZE("checkpoint_every", checkpoint_every),
      Field{"seed",
            [](TrainConfig& c, std::string_view k, std::string_view v) { c.seed = as_u64(k, v); },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      AVID_SIZE("n_classes", data.n_classes),
      AVID_SIZE("n_samples", data.n_samples),
      AVID_SIZE("dim_a", data.dim_a),
      AVID_SIZE("dim_v", data.dim_v),
      AVID_SIZE("latent_dim", data.latent_dim),
      AVID_DOUBLE("separation", data.separation),
      AVID_DOUBLE("noise", data.noise),
      AVID_DOUBLE("modality_noise", data.modality_noise),
  };
  return table;
}

#undef AVID_SIZE
#undef AVID_DOUBLE

std::string normalize_key(std::string_view key) {
  std::string k(textio::trim(key));
  for (char& c : k)
    if (c == '-') c = '_';
  return k;
}

}  // namespace

void set_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k = normalize_key(key);
  const std::string_view v = textio::trim(value);
  for (const auto& f : fields()) {
    if (f.key == k) {
      f.set(cfg, k, v);
      return;
    }
  }
  fail(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) invalid("tau", "must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) invalid("momentum", "must lie in [0,1)");
  if (!(library_momentum >= 0.0 && library_momentum < 1.0))
    invalid("library_momentum", "must lie in [0,1)");
  if (num_libraries < 2) invalid("C", "need at least 2 libraries");
  if (contrastive_size == 0) invalid("K", "must be positive");
  if (contrastive_size % (num_libraries - 1) != 0) {
    std::ostringstream msg;
    msg << "K=" << contrastive_size << " is not divisible by C-1=" << num_libraries - 1;
    invalid("K", msg.str());
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    invalid("warmup_fraction", "must lie in [0,1]");
  if (!(alpha >= 0.0)) invalid("alpha", "must be >= 0");
  if (batch_size == 0) invalid("batch_size", "must be positive");
  if (!(lr >= 0.0)) invalid("lr", "must be >= 0");
  if (!(weight_decay >= 0.0)) invalid("weight_decay", "must be >= 0");
  if (!(classifier_lr >= 0.0)) invalid("classifier_lr", "must be >= 0");
  if (!(classifier_init >= 0.0)) invalid("classifier_init", "must be >= 0");
  if (hidden_dim == 0) invalid("hidden_dim", "must be positive");
  if (embed_dim < 2) invalid("embed_dim", "must be >= 2");
  if (!(probe_split > 0.0 && probe_split < 1.0)) invalid("probe_split", "must lie in (0,1)");
  if (!(probe_lr > 0.0)) invalid("probe_lr", "must be > 0");
  try {
    data.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, e.what());
  }
}

std::size_t TrainConfig::warmup_epochs() const {
  return static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(epochs)));
}

SyntheticConfig TrainConfig::data_config() const {
  SyntheticConfig d = data;
  d.seed = derive_seed(seed, "data");
  return d;
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = textio::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      std::ostringstream msg;
      msg << "line " << lineno << ": expected key=value, got '" << text << "'";
      fail(ErrorCode::InvalidConfig, msg.str());
    }
    const auto key = textio::trim(text.substr(0, eq));
    if (key.starts_with("run.")) continue;
    set_value(base, key, text.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config file: " + path.string());
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const TrainConfig& cfg) {
  for (const auto& [k, v] : config_entries(cfg)) out << k << '=' << v << '\n';
}

}  // namespace avid
