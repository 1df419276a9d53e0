#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gpldla/checkpoint.hpp"
#include "gpldla/commands.hpp"
#include "gpldla/run_config.hpp"
#include "json.hpp"

using namespace gpldla;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "gpldla_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "run.toml";
  std::ofstream(p) << body;
  return p;
}

const char* kSmall = R"(seed = 3
head = "gpldla"
heads = ["gpldla", "protonet"]
workers = 1

[data]
samples_per_class = 20

[backbone]
hidden = 16
output_dim = 8

[train]
episodes = 60
epoch_length = 30
val_episodes = 10

[eval]
episodes = 20
calib_episodes = 20
ece_episodes = 20
)";

bool same_tensors(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_run_config(kSmall);
  CHECK(c.seed == 3);
  CHECK(c.train.seed == 3);
  CHECK(c.train.episodes == 60);
  CHECK(c.backbone.output_dim == 8);
  CHECK(parse_run_config(to_toml(c)) == c);

  RunConfig odd = c;
  odd.train.lr_theta = 0.1 + 0.2;
  odd.data.synthetic.center_scale = 3.0;
  odd.out_dir = "dir with \"quotes\"";
  CHECK(parse_run_config(to_toml(odd)) == odd);

  auto fails_with = [](const std::string& text, const std::string& needle) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("[train]\nepsiodes = 3\n", "epsiodes"));
  CHECK(fails_with("[model]\n", "model"));
  CHECK(fails_with("[train]\nepisodes = -3\n", "train.episodes"));
  CHECK(fails_with("[train]\nlr_theta = fast\n", "train.lr_theta"));
  CHECK(fails_with("seed = 1\nseed = 2\n", "seed"));
  CHECK(fails_with("head = \"svm\"\n", "head"));
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = scratch("ckpt");
  Rng rng(1);
  BackboneSpec spec;
  Model m = init_model(HeadKind::gpldla, spec, rng);
  m.prior.log_beta = 0.25;
  write_checkpoint(dir / "a.bin", model_tensors(m));
  const auto back = model_from_tensors(read_checkpoint(dir / "a.bin"), spec, HeadKind::gpldla);
  CHECK(same_tensors(model_tensors(back), model_tensors(m)));

  std::string bytes = slurp(dir / "a.bin");
  CHECK(bytes.substr(0, 4) == "GPLD");
  bytes[0] = 'X';
  std::ofstream(dir / "b.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(read_checkpoint(dir / "b.bin"), CheckpointError);
  std::ofstream(dir / "c.bin", std::ios::binary) << slurp(dir / "a.bin").substr(0, 40);
  CHECK_THROWS_AS(read_checkpoint(dir / "c.bin"), CheckpointError);

  BackboneSpec other = spec;
  other.output_dim = 7;
  CHECK_THROWS_AS(model_from_tensors(read_checkpoint(dir / "a.bin"), other, HeadKind::gpldla),
                  ValidationError);
}

TEST_CASE("train command") {
  const fs::path dir = scratch("train");
  const fs::path cfg = write_config(dir, kSmall);
  std::ostringstream out, err;
  Overrides o;
  o.out_dir = (dir / "a").string();
  REQUIRE(cmd_train(cfg.string(), o, out, err) == kExitOk);
  o.out_dir = (dir / "b").string();
  REQUIRE(cmd_train(cfg.string(), o, out, err) == kExitOk);
  for (const char* f : {"train_log.jsonl", "checkpoint.bin", "checkpoint_final.bin"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const RunConfig echoed = load_run_config(dir / "a" / "config.toml");
  CHECK(echoed.train.episodes == 60);
  CHECK(echoed.out_dir == (dir / "a").string());
  CHECK(to_toml(echoed) == slurp(dir / "a" / "config.toml"));

  std::string text = kSmall;
  text.replace(text.find("episodes = 60"), 13, "episodes = 0");
  const fs::path zcfg = write_config(scratch("train0"), text);
  o.out_dir = (zcfg.parent_path() / "out").string();
  REQUIRE(cmd_train(zcfg.string(), o, out, err) == kExitOk);
  const RunConfig zc = load_run_config(zcfg);
  CHECK(same_tensors(read_checkpoint(zcfg.parent_path() / "out" / "checkpoint.bin"),
                     model_tensors(initial_model(zc, HeadKind::gpldla))));
}

TEST_CASE("train command errors") {
  const fs::path dir = scratch("errors");
  std::ostringstream out, err;
  const fs::path missing = write_config(
      dir, "[data]\nsource = \"csv\"\ncsv_path = \"/nonexistent/feat.csv\"\nsplit_path = \"/nonexistent/s.txt\"\n");
  CHECK(cmd_train(missing.string(), {}, out, err) == kExitUsage);
  CHECK(err.str().find("/nonexistent/feat.csv") != std::string::npos);

  std::ostringstream err2;
  const fs::path bad = write_config(dir, "[train]\ndecay = 2.0\n");
  CHECK(cmd_train(bad.string(), {}, out, err2) == kExitUsage);
  CHECK(err2.str().find("train.decay") != std::string::npos);

  std::string text = kSmall;
  text.replace(text.find("episodes = 60"), 13, "episodes = 60\nlr_theta = 1e300\nlr_prior = 1e300");
  const fs::path blowup = write_config(scratch("blowup"), text);
  std::ostringstream err3;
  Overrides o;
  o.out_dir = (blowup.parent_path() / "out").string();
  CHECK(cmd_train(blowup.string(), o, out, err3) == kExitNumerical);
}

TEST_CASE("eval command") {
  const fs::path dir = scratch("eval");
  std::ostringstream out, err;
  // Overlapping clusters keep raw-feature accuracy away from both chance and 1.
  const fs::path cfg = write_config(dir, R"(seed = 1
workers = 1
[data]
center_scale = 0.35
samples_per_class = 20
[backbone]
arch = "identity"
normalize = false
[train]
episodes = 0
[eval]
episodes = 100
calib_episodes = 50
ece_episodes = 50
)");
  Overrides o;
  o.out_dir = (dir / "run").string();
  REQUIRE(cmd_train(cfg.string(), o, out, err) == kExitOk);
  const fs::path ckpt = dir / "run" / "checkpoint.bin";
  REQUIRE(cmd_eval(cfg.string(), ckpt.string(), o, out, err) == kExitOk);
  const auto metrics = nlohmann::json::parse(slurp(dir / "run" / "metrics.json"));
  const double acc = metrics.at("accuracy").get<double>();
  CHECK(acc >= 0.15);
  CHECK(acc <= 0.9);
  CHECK(metrics.at("ci95").get<double>() > 0.0);
  CHECK(metrics.at("temperature").get<double>() > 0.0);
  CHECK(metrics.at("ece").get<double>() >= 0.0);
  CHECK(metrics.at("n_episodes").get<int>() == 100);
  CHECK(fs::exists(dir / "run" / "reliability.csv"));

  std::string single = slurp(cfg);
  single.replace(single.find("episodes = 100"), 14, "episodes = 1");
  const fs::path one = dir / "one.toml";
  std::ofstream(one) << single;
  REQUIRE(cmd_eval(one.string(), ckpt.string(), o, out, err) == kExitOk);
  CHECK(nlohmann::json::parse(slurp(dir / "run" / "metrics.json")).at("ci95").get<double>() == 0.0);

  std::string bytes = slurp(ckpt);
  bytes[1] = 'Q';
  std::ofstream(dir / "corrupt.bin", std::ios::binary) << bytes;
  CHECK(cmd_eval(cfg.string(), (dir / "corrupt.bin").string(), o, out, err) == kExitUsage);

  const fs::path mismatch = write_config(dir / "..", std::string(kSmall));
  CHECK(cmd_eval(mismatch.string(), ckpt.string(), o, out, err) == kExitUsage);
}

TEST_CASE("compare command") {
  const fs::path dir = scratch("compare");
  std::ostringstream out, err;
  const fs::path cfg = write_config(dir, kSmall);
  Overrides o;
  o.out_dir = (dir / "a").string();
  REQUIRE(cmd_compare(cfg.string(), o, out, err) == kExitOk);
  o.out_dir = (dir / "b").string();
  REQUIRE(cmd_compare(cfg.string(), o, out, err) == kExitOk);
  CHECK(slurp(dir / "a" / "compare.csv") == slurp(dir / "b" / "compare.csv"));
  const auto j = nlohmann::json::parse(slurp(dir / "a" / "compare.json"));
  CHECK(j.at("rows").size() == 2);

  std::string text = kSmall;
  text.replace(text.find("heads = [\"gpldla\", \"protonet\"]"), 30, "heads = [\"gpldla\"]");
  const fs::path single = write_config(scratch("compare1"), text);
  CHECK(cmd_compare(single.string(), o, out, err) == kExitUsage);
}

TEST_CASE("selfcheck command") {
  std::ostringstream a, b, m;
  CHECK(cmd_selfcheck(5, false, a) == kExitOk);
  CHECK(cmd_selfcheck(5, false, b) == kExitOk);
  CHECK(a.str() == b.str());
  CHECK(cmd_selfcheck(5, true, m) == kExitSelfcheckFailed);
  CHECK(m.str().find("laplace_hessian_oracle         FAIL") != std::string::npos);
  CHECK(m.str().find("prior_norm_identity            FAIL") != std::string::npos);
}
