#include "gpldla/run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gpldla/parallel.hpp"

namespace gpldla {

namespace {

// Bare tokens stay raw until the field type decides how to read them; quoted
// strings and arrays are decoded up front.
struct RawValue {
  enum class Kind { token, string, array } kind = Kind::token;
  std::string text;
  std::vector<std::string> items;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(std::string_view tok, const std::string& where) {
  if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"') {
    throw ConfigError(where + ": expected a double-quoted string, got '" + std::string(tok) + "'");
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
    if (tok[i] == '\\' && i + 2 < tok.size()) {
      out.push_back(tok[++i]);
    } else {
      out.push_back(tok[i]);
    }
  }
  return out;
}

RawValue parse_value(std::string_view tok, const std::string& where) {
  RawValue v;
  if (tok.empty()) throw ConfigError(where + ": missing value");
  if (tok.front() == '"') {
    v.kind = RawValue::Kind::string;
    v.text = unquote(tok, where);
  } else if (tok.front() == '[') {
    if (tok.back() != ']') throw ConfigError(where + ": unterminated array");
    v.kind = RawValue::Kind::array;
    const auto body = trim(tok.substr(1, tok.size() - 2));
    std::size_t start = 0;
    while (!body.empty()) {
      const auto comma = body.find(',', start);
      const auto item = trim(body.substr(start, comma - start));
      if (!item.empty()) v.items.push_back(unquote(item, where));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  } else {
    v.text = std::string(tok);
  }
  return v;
}

template <class T>
T read_number(const RawValue& v, const std::string& key, const char* kind) {
  T out{};
  const std::string& s = v.text;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (v.kind != RawValue::Kind::token || s.empty() || res.ec != std::errc() ||
      res.ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected " + kind + ", got '" + s + "'");
  }
  return out;
}

bool read_bool(const RawValue& v, const std::string& key) {
  if (v.kind == RawValue::Kind::token && v.text == "true") return true;
  if (v.kind == RawValue::Kind::token && v.text == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v.text + "'");
}

std::string read_string(const RawValue& v, const std::string& key) {
  if (v.kind != RawValue::Kind::string) throw ConfigError(key + ": expected a quoted string");
  return v.text;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, res.ptr);
  // Keep a float-looking token so the value is obviously real-valued.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

struct Field {
  std::string key;  // section.name, or name for top-level keys
  std::function<void(RunConfig&, const RawValue&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
Field size_field(std::string key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const RawValue& v, const std::string& k) {
            ref(c) = read_number<std::size_t>(v, k, "a non-negative integer");
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
Field u64_field(std::string key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const RawValue& v, const std::string& k) {
            ref(c) = read_number<std::uint64_t>(v, k, "a non-negative integer");
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
Field double_field(std::string key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const RawValue& v, const std::string& k) {
            ref(c) = read_number<double>(v, k, "a number");
          },
          [ref](const RunConfig& c) { return format_double(ref(c)); }};
}

template <class Ref>
Field bool_field(std::string key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const RawValue& v, const std::string& k) { ref(c) = read_bool(v, k); },
          [ref](const RunConfig& c) { return ref(c) ? "true" : "false"; }};
}

template <class Ref>
Field string_field(std::string key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const RawValue& v, const std::string& k) {
            ref(c) = read_string(v, k);
          },
          [ref](const RunConfig& c) { return quote(ref(c)); }};
}

// Enum stored as a string; parse throws ValidationError, rethrown with the key.
template <class Ref, class Parse, class Print>
Field enum_field(std::string key, Ref ref, Parse parse, Print print) {
  return {key,
          [ref, parse](RunConfig& c, const RawValue& v, const std::string& k) {
            const auto s = read_string(v, k);
            try {
              ref(c) = parse(s);
            } catch (const ValidationError& e) {
              throw ConfigError(k + ": " + e.what());
            }
          },
          [ref, print](const RunConfig& c) {
            return quote(print(ref(c)));
          }};
}

DataSource parse_source(const std::string& s) {
  if (s == "synthetic") return DataSource::synthetic;
  if (s == "csv") return DataSource::csv;
  throw ValidationError("unknown data source '" + s + "' (synthetic|csv)");
}

std::string print_source(DataSource s) { return s == DataSource::csv ? "csv" : "synthetic"; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(u64_field("seed", [](auto& c) -> auto& { return c.seed; }));
    f.push_back(enum_field(
        "head", [](auto& c) -> auto& { return c.head; }, parse_head,
        [](HeadKind h) { return std::string(to_string(h)); }));
    f.push_back({"heads",
                 [](RunConfig& c, const RawValue& v, const std::string& k) {
                   if (v.kind != RawValue::Kind::array) {
                     throw ConfigError(k + ": expected an array of head names");
                   }
                   c.compare_heads.clear();
                   for (const auto& item : v.items) {
                     try {
                       c.compare_heads.push_back(parse_head(item));
                     } catch (const ValidationError& e) {
                       throw ConfigError(k + ": " + e.what());
                     }
                   }
                 },
                 [](const RunConfig& c) {
                   std::string s = "[";
                   for (std::size_t i = 0; i < c.compare_heads.size(); ++i) {
                     if (i) s += ", ";
                     s += quote(to_string(c.compare_heads[i]));
                   }
                   return s + "]";
                 }});
    f.push_back(string_field("out", [](auto& c) -> auto& { return c.out_dir; }));
    f.push_back(size_field("workers", [](auto& c) -> auto& { return c.workers; }));

    f.push_back(enum_field(
        "data.source", [](auto& c) -> auto& { return c.data.source; }, parse_source,
        print_source));
    f.push_back(string_field("data.csv_path", [](auto& c) -> auto& { return c.data.csv_path; }));
    f.push_back(
        string_field("data.split_path", [](auto& c) -> auto& { return c.data.split_path; }));
    f.push_back(bool_field("data.header", [](auto& c) -> auto& { return c.data.header; }));
    f.push_back(size_field("data.input_dim",
                           [](auto& c) -> auto& { return c.data.synthetic.input_dim; }));
    f.push_back(size_field("data.train_classes",
                           [](auto& c) -> auto& { return c.data.synthetic.train_classes; }));
    f.push_back(size_field("data.val_classes",
                           [](auto& c) -> auto& { return c.data.synthetic.val_classes; }));
    f.push_back(size_field("data.test_classes",
                           [](auto& c) -> auto& { return c.data.synthetic.test_classes; }));
    f.push_back(size_field("data.samples_per_class",
                           [](auto& c) -> auto& { return c.data.synthetic.samples_per_class; }));
    f.push_back(double_field("data.center_scale",
                             [](auto& c) -> auto& { return c.data.synthetic.center_scale; }));
    f.push_back(double_field("data.noise_scale",
                             [](auto& c) -> auto& { return c.data.synthetic.noise_scale; }));
    f.push_back(u64_field("data.seed", [](auto& c) -> auto& { return c.data.synthetic.seed; }));

    f.push_back(enum_field(
        "backbone.arch", [](auto& c) -> auto& { return c.backbone.arch; }, parse_architecture,
        [](Architecture a) { return std::string(to_string(a)); }));
    f.push_back(size_field("backbone.hidden", [](auto& c) -> auto& { return c.backbone.hidden; }));
    f.push_back(
        size_field("backbone.output_dim", [](auto& c) -> auto& { return c.backbone.output_dim; }));
    f.push_back(enum_field(
        "backbone.activation", [](auto& c) -> auto& { return c.backbone.activation; },
        parse_activation, [](Activation a) { return std::string(to_string(a)); }));
    f.push_back(
        bool_field("backbone.normalize", [](auto& c) -> auto& { return c.backbone.normalize; }));

    f.push_back(size_field("train.episodes", [](auto& c) -> auto& { return c.train.episodes; }));
    f.push_back(size_field("train.way", [](auto& c) -> auto& { return c.train.shape.ways; }));
    f.push_back(size_field("train.shot", [](auto& c) -> auto& { return c.train.shape.shots; }));
    f.push_back(size_field("train.query", [](auto& c) -> auto& { return c.train.shape.queries; }));
    f.push_back(
        size_field("train.mc_samples", [](auto& c) -> auto& { return c.train.mc_samples; }));
    f.push_back(double_field("train.lr_theta", [](auto& c) -> auto& { return c.train.lr_theta; }));
    f.push_back(double_field("train.lr_prior", [](auto& c) -> auto& { return c.train.lr_prior; }));
    f.push_back(
        size_field("train.step_epochs", [](auto& c) -> auto& { return c.train.step_epochs; }));
    f.push_back(double_field("train.decay", [](auto& c) -> auto& { return c.train.decay; }));
    f.push_back(
        size_field("train.epoch_length", [](auto& c) -> auto& { return c.train.epoch_length; }));
    f.push_back(
        size_field("train.val_episodes", [](auto& c) -> auto& { return c.train.val_episodes; }));
    f.push_back(
        bool_field("train.clip_gradients", [](auto& c) -> auto& { return c.train.clip_gradients; }));
    f.push_back(
        double_field("train.clip_norm", [](auto& c) -> auto& { return c.train.clip_norm; }));

    f.push_back(size_field("eval.episodes", [](auto& c) -> auto& { return c.eval.episodes; }));
    f.push_back(
        size_field("eval.calib_episodes", [](auto& c) -> auto& { return c.eval.calib_episodes; }));
    f.push_back(
        size_field("eval.ece_episodes", [](auto& c) -> auto& { return c.eval.ece_episodes; }));
    f.push_back(size_field("eval.bins", [](auto& c) -> auto& { return c.eval.bins; }));
    f.push_back(
        size_field("eval.mc_samples", [](auto& c) -> auto& { return c.eval.mc_samples; }));
    f.push_back(u64_field("eval.seed", [](auto& c) -> auto& { return c.eval.seed; }));
    return f;
  }();
  return all;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::size_t RunConfig::resolved_workers() const { return workers == 0 ? default_workers() : workers; }

void RunConfig::validate() const {
  try {
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  require(train.seed == seed, "train seed must mirror the top-level seed");
  require(backbone.input_dim >= 1, "data.input_dim: must be at least 1");
  require(backbone.arch == Architecture::identity || backbone.output_dim >= 1,
          "backbone.output_dim: must be at least 1");
  require(eval.bins >= 1, "eval.bins: must be at least 1");
  require(eval.mc_samples >= 1, "eval.mc_samples: must be at least 1");
  require(eval.episodes >= 1, "eval.episodes: must be at least 1");
  if (data.source == DataSource::synthetic) {
    const auto& s = data.synthetic;
    require(s.center_scale > 0.0, "data.center_scale: must be positive");
    require(s.noise_scale > 0.0, "data.noise_scale: must be positive");
    require(s.samples_per_class >= train.shape.samples_per_class(),
            "data.samples_per_class: must cover train.shot + train.query");
    require(s.train_classes >= train.shape.ways, "data.train_classes: fewer than train.way");
  } else {
    require(!data.csv_path.empty(), "data.csv_path: required when data.source = \"csv\"");
    require(!data.split_path.empty(), "data.split_path: required when data.source = \"csv\"");
    require(std::filesystem::exists(data.csv_path),
            "data.csv_path: file not found: " + data.csv_path);
    require(std::filesystem::exists(data.split_path),
            "data.split_path: file not found: " + data.split_path);
  }
}

RunConfig parse_run_config(std::string_view text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  RunConfig config;
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      require(line.back() == ']', where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      require(section == "data" || section == "backbone" || section == "train" || section == "eval",
              where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, where + ": expected key = value");
    const std::string name(trim(line.substr(0, eq)));
    const std::string key = section.empty() ? name : section + "." + name;
    auto it = by_key.find(key);
    require(it != by_key.end(), key + ": unknown key (" + where + ")");
    require(seen.insert(key).second, key + ": set twice (" + where + ")");
    it->second->set(config, parse_value(trim(line.substr(eq + 1)), key), key);
  }
  config.train.seed = config.seed;
  config.backbone.input_dim = config.data.synthetic.input_dim;
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string to_toml(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + f.get(config) + "\n";
  }
  return out;
}

DatasetSplit load_data(const DataConfig& data) {
  if (data.source == DataSource::csv) return load_dataset(data.csv_path, data.split_path, data.header);
  return generate_synthetic_pool(data.synthetic);
}

}  // namespace gpldla
