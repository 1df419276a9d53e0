#include "gpldla/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gpldla/errors.hpp"

namespace gpldla {

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "?";
}

DatasetSplit::DatasetSplit(std::size_t input_dim, std::map<std::int64_t, Tensor> classes,
                           std::vector<std::int64_t> train, std::vector<std::int64_t> val,
                           std::vector<std::int64_t> test)
    : input_dim_(input_dim),
      classes_(std::move(classes)),
      train_(std::move(train)),
      val_(std::move(val)),
      test_(std::move(test)) {
  std::set<std::int64_t> seen;
  for (const auto* ids : {&train_, &val_, &test_}) {
    for (auto id : *ids) {
      if (!seen.insert(id).second) {
        throw ValidationError("class " + std::to_string(id) + " appears in more than one split");
      }
      if (!classes_.contains(id)) {
        throw ValidationError("split lists class " + std::to_string(id) + " with no samples");
      }
    }
  }
  for (const auto& [id, t] : classes_) {
    if (t.cols() != input_dim_) {
      throw ValidationError("class " + std::to_string(id) + " has feature width " +
                            std::to_string(t.cols()) + ", expected " + std::to_string(input_dim_));
    }
  }
}

const std::vector<std::int64_t>& DatasetSplit::class_ids(SplitTag tag) const {
  switch (tag) {
    case SplitTag::train: return train_;
    case SplitTag::val: return val_;
    case SplitTag::test: return test_;
  }
  return train_;
}

const Tensor& DatasetSplit::samples(std::int64_t class_id) const {
  auto it = classes_.find(class_id);
  if (it == classes_.end()) throw ContractError("unknown class " + std::to_string(class_id));
  return it->second;
}

std::size_t DatasetSplit::total_samples() const {
  std::size_t n = 0;
  for (const auto& [id, t] : classes_) n += t.rows();
  return n;
}

DatasetSplit generate_synthetic_pool(const SyntheticTaskConfig& cfg) {
  if (!(cfg.center_scale > 0.0) || !(cfg.noise_scale >= 0.0)) {
    throw ContractError("synthetic pool scales must be positive");
  }
  if (cfg.input_dim == 0 || cfg.samples_per_class == 0) {
    throw ContractError("synthetic pool needs positive input_dim and samples_per_class");
  }
  Rng rng(cfg.seed);
  const std::size_t d = cfg.input_dim;
  std::map<std::int64_t, Tensor> classes;
  std::vector<std::int64_t> train, val, test;
  for (std::size_t c = 0; c < cfg.latent_classes(); ++c) {
    const auto id = static_cast<std::int64_t>(c);
    std::vector<double> center(d);
    for (double& x : center) x = cfg.center_scale * rng.normal();
    Tensor samples(Shape{cfg.samples_per_class, d});
    for (std::size_t i = 0; i < cfg.samples_per_class; ++i)
      for (std::size_t j = 0; j < d; ++j) samples(i, j) = center[j] + cfg.noise_scale * rng.normal();
    classes.emplace(id, std::move(samples));
    if (c < cfg.train_classes) {
      train.push_back(id);
    } else if (c < cfg.train_classes + cfg.val_classes) {
      val.push_back(id);
    } else {
      test.push_back(id);
    }
  }
  return DatasetSplit(d, std::move(classes), std::move(train), std::move(val), std::move(test));
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& split_path, bool has_header) {
  std::ifstream csv(csv_path);
  if (!csv) throw ParseError("cannot open dataset file " + csv_path.string());

  std::map<std::int64_t, std::vector<double>> rows_by_class;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(csv, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto tokens = split_commas(body);
    if (tokens.size() < 2) {
      throw ParseError(where(csv_path, line_no) + ": expected features followed by a class id");
    }
    if (width == 0) width = tokens.size() - 1;
    if (tokens.size() - 1 != width) {
      throw ParseError(where(csv_path, line_no) + ": expected " + std::to_string(width) +
                       " feature columns, found " + std::to_string(tokens.size() - 1));
    }
    std::int64_t id = 0;
    if (!parse_number(tokens.back(), id)) {
      throw ParseError(where(csv_path, line_no) + ": invalid class id '" +
                       std::string(tokens.back()) + "'");
    }
    std::vector<double> values(width);
    for (std::size_t j = 0; j < width; ++j) {
      if (!parse_number(tokens[j], values[j])) {
        throw ParseError(where(csv_path, line_no) + ": invalid number '" +
                         std::string(tokens[j]) + "' in column " + std::to_string(j + 1));
      }
    }
    auto& bucket = rows_by_class[id];
    bucket.insert(bucket.end(), values.begin(), values.end());
  }
  if (rows_by_class.empty()) throw ParseError(csv_path.string() + ": no samples");

  std::map<std::int64_t, Tensor> classes;
  for (auto& [id, data] : rows_by_class) {
    const std::size_t n = data.size() / width;
    classes.emplace(id, Tensor(Shape{n, width}, std::move(data)));
  }

  std::ifstream split(split_path);
  if (!split) throw ParseError("cannot open split file " + split_path.string());
  std::map<std::string, std::vector<std::int64_t>> lists;
  line_no = 0;
  while (std::getline(split, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(where(split_path, line_no) + ": expected '<split>: ids'");
    }
    const std::string tag(trim(body.substr(0, colon)));
    if (tag != "train" && tag != "val" && tag != "test") {
      throw ParseError(where(split_path, line_no) + ": unknown split '" + tag + "'");
    }
    if (lists.contains(tag)) {
      throw ParseError(where(split_path, line_no) + ": duplicate split '" + tag + "'");
    }
    auto& ids = lists[tag];
    const auto rest = trim(body.substr(colon + 1));
    if (rest.empty()) continue;
    for (auto tok : split_commas(rest)) {
      std::int64_t id = 0;
      if (!parse_number(tok, id)) {
        throw ParseError(where(split_path, line_no) + ": invalid class id '" + std::string(tok) + "'");
      }
      ids.push_back(id);
    }
  }
  for (const char* tag : {"train", "val", "test"}) {
    if (!lists.contains(tag)) {
      throw ParseError(split_path.string() + ": missing '" + tag + ":' line");
    }
  }
  return DatasetSplit(width, std::move(classes), lists["train"], lists["val"], lists["test"]);
}

Episode sample_episode(const DatasetSplit& split, SplitTag tag, const EpisodeShape& shape,
                       Rng& rng) {
  if (shape.ways == 0 || shape.shots == 0) throw ContractError("episode needs ways, shots >= 1");
  const auto& pool = split.class_ids(tag);
  if (pool.size() < shape.ways) {
    throw CapacityError(std::string(to_string(tag)) + " split has " + std::to_string(pool.size()) +
                        " classes, episode needs " + std::to_string(shape.ways));
  }
  // Partial Fisher-Yates: uniform subset of `ways` classes.
  std::vector<std::int64_t> ids = pool;
  for (std::size_t i = 0; i < shape.ways; ++i) {
    std::swap(ids[i], ids[i + rng.uniform_index(ids.size() - i)]);
  }
  ids.resize(shape.ways);
  std::sort(ids.begin(), ids.end());

  const std::size_t d = split.input_dim();
  const std::size_t per_class = shape.samples_per_class();
  Episode ep;
  ep.shape = shape;
  ep.class_ids = ids;
  ep.support.features = Tensor(Shape{shape.ways * shape.shots, d});
  ep.query.features = Tensor(Shape{shape.ways * shape.queries, d});
  ep.support.labels.reserve(shape.ways * shape.shots);
  ep.query.labels.reserve(shape.ways * shape.queries);

  for (std::size_t local = 0; local < ids.size(); ++local) {
    const Tensor& samples = split.samples(ids[local]);
    if (samples.rows() < per_class) {
      throw CapacityError("class " + std::to_string(ids[local]) + " has " +
                          std::to_string(samples.rows()) + " samples, episode needs " +
                          std::to_string(per_class));
    }
    std::vector<std::size_t> order(samples.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < per_class; ++i) {
      std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
    }
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto src = samples.row(order[i]);
      LabeledSet& dst = i < shape.shots ? ep.support : ep.query;
      const std::size_t r = dst.labels.size();
      std::copy(src.begin(), src.end(), dst.features.row(r).begin());
      dst.labels.push_back(local);
    }
  }
  return ep;
}

}  // namespace gpldla
