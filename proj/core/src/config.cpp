#include "gcmc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                    std::string(want));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad_value(key, v, "a number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  bad_value(key, v, "true/false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

std::string fmt(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    out += f(xs[k]);
  }
  return out;
}

template <typename Parse, typename E>
E parse_enum(std::string_view key, std::string_view v, Parse parse) {
  try {
    return parse(v);
  } catch (const ConfigError&) {
    bad_value(key, v, "a known option");
  }
}

struct Key {
  std::string_view name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GCMC_STRING_KEY(field) \
  Key{#field, [](RunConfig& c, std::string_view v) { c.field = std::string(v); }, \
      [](const RunConfig& c) { return c.field; }}
#define GCMC_SIZE_KEY(name, field) \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = parse_u64(name, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }}
#define GCMC_DOUBLE_KEY(name, field) \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = parse_double(name, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}
#define GCMC_BOOL_KEY(name, field) \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = parse_bool(name, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}
#define GCMC_ACTIVATION_KEY(name, field)                                                   \
  Key{name,                                                                                \
      [](RunConfig& c, std::string_view v) {                                               \
        c.field = parse_enum<Activation (*)(std::string_view), Activation>(name, v,        \
                                                                           parse_activation); \
      },                                                                                   \
      [](const RunConfig& c) { return std::string(to_string(c.field)); }}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      Key{"format",
          [](RunConfig& c, std::string_view v) {
            c.format = parse_enum<DatasetFormat (*)(std::string_view), DatasetFormat>(
                "format", v, parse_dataset_format);
          },
          [](const RunConfig& c) { return std::string(to_string(c.format)); }},
      GCMC_STRING_KEY(data_dir),
      GCMC_STRING_KEY(ratings_file),
      GCMC_STRING_KEY(train_file),
      GCMC_STRING_KEY(test_file),
      GCMC_STRING_KEY(users_file),
      GCMC_STRING_KEY(items_file),
      GCMC_DOUBLE_KEY("test_fraction", test_fraction),
      GCMC_DOUBLE_KEY("validation_fraction", validation_fraction),
      GCMC_SIZE_KEY("data_seed", data_seed),
      GCMC_SIZE_KEY("hidden_dim", encoder.hidden_dim),
      GCMC_SIZE_KEY("embed_dim", encoder.embed_dim),
      Key{"accumulation",
          [](RunConfig& c, std::string_view v) {
            c.encoder.accumulation = parse_enum<Accumulation (*)(std::string_view), Accumulation>(
                "accumulation", v, parse_accumulation);
          },
          [](const RunConfig& c) { return std::string(to_string(c.encoder.accumulation)); }},
      Key{"normalization",
          [](RunConfig& c, std::string_view v) {
            c.encoder.normalization =
                parse_enum<Normalization (*)(std::string_view), Normalization>(
                    "normalization", v, parse_normalization);
          },
          [](const RunConfig& c) { return std::string(to_string(c.encoder.normalization)); }},
      GCMC_BOOL_KEY("ordinal_sharing", encoder.ordinal_sharing),
      GCMC_ACTIVATION_KEY("conv_activation", encoder.conv_activation),
      GCMC_ACTIVATION_KEY("dense_activation", encoder.dense_activation),
      GCMC_BOOL_KEY("side_info", encoder.side_info),
      GCMC_SIZE_KEY("side_hidden_dim", encoder.side_hidden_dim),
      GCMC_DOUBLE_KEY("node_dropout", encoder.node_dropout),
      GCMC_DOUBLE_KEY("unit_dropout", encoder.unit_dropout),
      Key{"num_basis",
          [](RunConfig& c, std::string_view v) {
            if (v == "auto") {
              c.num_basis.reset();
            } else {
              c.num_basis = parse_u64("num_basis", v);
            }
          },
          [](const RunConfig& c) { return c.num_basis ? std::to_string(*c.num_basis) : "auto"; }},
      GCMC_SIZE_KEY("epochs", epochs),
      GCMC_SIZE_KEY("batch_size", batch_size),
      GCMC_DOUBLE_KEY("learning_rate", adam.learning_rate),
      GCMC_DOUBLE_KEY("adam_beta1", adam.beta1),
      GCMC_DOUBLE_KEY("adam_beta2", adam.beta2),
      GCMC_DOUBLE_KEY("adam_epsilon", adam.epsilon),
      GCMC_DOUBLE_KEY("ema_decay", ema_decay),
      GCMC_BOOL_KEY("use_ema", use_ema),
      GCMC_SIZE_KEY("eval_every", eval_every),
      GCMC_SIZE_KEY("seed", seed),
      GCMC_STRING_KEY(out_dir),
      GCMC_BOOL_KEY("record_elapsed", record_elapsed),
      Key{"coldstart_users",
          [](RunConfig& c, std::string_view v) {
            c.coldstart.num_users.clear();
            for (auto x : split_list(v)) c.coldstart.num_users.push_back(parse_u64("coldstart_users", x));
          },
          [](const RunConfig& c) {
            return join(c.coldstart.num_users, [](std::size_t x) { return std::to_string(x); });
          }},
      Key{"coldstart_keep",
          [](RunConfig& c, std::string_view v) {
            c.coldstart.keep_ratings.clear();
            for (auto x : split_list(v)) c.coldstart.keep_ratings.push_back(parse_u64("coldstart_keep", x));
          },
          [](const RunConfig& c) {
            return join(c.coldstart.keep_ratings, [](std::size_t x) { return std::to_string(x); });
          }},
      Key{"coldstart_features",
          [](RunConfig& c, std::string_view v) {
            c.coldstart.features.clear();
            for (auto x : split_list(v)) c.coldstart.features.push_back(parse_bool("coldstart_features", x));
          },
          [](const RunConfig& c) {
            return join(c.coldstart.features, [](bool b) { return std::string(b ? "on" : "off"); });
          }},
      Key{"coldstart_seeds",
          [](RunConfig& c, std::string_view v) {
            c.coldstart.seeds.clear();
            for (auto x : split_list(v)) c.coldstart.seeds.push_back(parse_u64("coldstart_seeds", x));
          },
          [](const RunConfig& c) {
            return join(c.coldstart.seeds, [](std::uint64_t x) { return std::to_string(x); });
          }},
  };
  return keys;
}

#undef GCMC_STRING_KEY
#undef GCMC_SIZE_KEY
#undef GCMC_DOUBLE_KEY
#undef GCMC_BOOL_KEY
#undef GCMC_ACTIVATION_KEY

}  // namespace

bool is_output_only_key(std::string_view key) {
  return key == "out_dir" || key == "record_elapsed" || key == "data_dir";
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const Key& k : registry()) {
    if (k.name == key) {
      k.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = path.string() + ":" + std::to_string(number);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    try {
      set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  RunConfig c;
  c.apply_file(path);
  return c;
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : registry()) out.emplace_back(std::string(k.name), k.get(*this));
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::fingerprint() const {
  std::string text;
  for (const auto& [k, v] : resolved()) {
    if (is_output_only_key(k)) continue;
    text += k + " = " + v + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

void RunConfig::validate(std::size_t num_levels) const {
  train_config(num_levels).model.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (test_file.empty() && ratings_file.empty()) {
    throw ConfigError("either test_file (with train_file) or ratings_file must be set");
  }
  if (!test_file.empty() && train_file.empty()) throw ConfigError("test_file requires train_file");
  if (coldstart.keep_ratings.empty() || coldstart.num_users.empty() || coldstart.features.empty() ||
      coldstart.seeds.empty()) {
    throw ConfigError("cold-start lists must not be empty");
  }
  for (std::size_t r : coldstart.keep_ratings) {
    if (r == 0) throw ConfigError("coldstart_keep entries must be at least 1");
  }
}

TrainConfig RunConfig::train_config(std::size_t num_levels) const {
  TrainConfig t;
  t.model.encoder = encoder;
  t.model.num_levels = num_levels;
  t.model.num_basis = num_basis ? *num_basis : std::max<std::size_t>(1, 2 * num_levels / 5);
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.adam = adam;
  t.ema_decay = ema_decay;
  t.use_ema = use_ema;
  t.eval_every = eval_every;
  t.seed = seed;
  return t;
}

std::filesystem::path RunConfig::data_path(const std::string& file) const {
  const std::filesystem::path p(file);
  if (p.is_absolute()) return p;
  if (!data_dir.empty()) return std::filesystem::path(data_dir) / p;
  if (const char* env = std::getenv("GCMC_DATA_DIR"); env && *env) {
    return std::filesystem::path(env) / p;
  }
  return std::filesystem::path("data") / p;
}

PreparedData prepare_data(const RunConfig& config) {
  config.validate(level_values_for(config.format).size());
  std::optional<std::filesystem::path> users;
  std::optional<std::filesystem::path> items;
  if (config.encoder.side_info && config.format != DatasetFormat::kMl100k) {
    throw ConfigError("side information is only available for the ml100k format");
  }
  if (config.format == DatasetFormat::kMl100k) {
    if (!config.users_file.empty()) users = config.data_path(config.users_file);
    if (!config.items_file.empty()) items = config.data_path(config.items_file);
  }

  PreparedData out;
  std::vector<std::size_t> train;
  if (!config.test_file.empty()) {
    LoadedSplit loaded = load_movielens_split(config.data_path(config.train_file),
                                              config.data_path(config.test_file), users, items,
                                              config.format);
    out.dataset = std::move(loaded.dataset);
    train = std::move(loaded.train);
    out.split.test = std::move(loaded.test);
  } else {
    out.dataset = load_movielens(config.data_path(config.ratings_file), users, items, config.format);
    std::vector<std::size_t> all(out.dataset.triples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    SplitSpec s = split_train_val(all, 1.0 - config.test_fraction, config.data_seed);
    train = std::move(s.train);
    out.split.test = std::move(s.validation);
  }
  if (config.validation_fraction > 0.0) {
    SplitSpec s = split_train_val(train, 1.0 - config.validation_fraction, config.data_seed);
    out.split.train = std::move(s.train);
    out.split.validation = std::move(s.validation);
  } else {
    out.split.train = std::move(train);
  }
  out.split.seed = config.data_seed;
  return out;
}

}  // namespace gcmc
