#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "rfcm_unit_cli.txt";
  const std::string cmd = std::string("\"") + RFCM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "rfcm_unit_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTinyConfig = R"({"model": {"d_in": 8, "d_rsa": 8, "d_enc": 8, "d_dec": 8, "heads": 2,
  "enc_layers": 1, "dec_layers": 1, "rsa_layers": 1, "max_len": 16},
  "decode": {"max_len": 16}, "train": {"max_epochs": 2, "batch_size": 8}})";

void tiny_run() {
  static bool done = false;
  if (done) return;
  const fs::path d = workdir();
  REQUIRE(cli("gen-data --seed 2 --out " + q(d / "data") + " --n-train 16 --n-val 4 --n-test 4 --d-in 8").code == 0);
  write(d / "tiny.json", kTinyConfig);
  REQUIRE(cli("train --config " + q(d / "tiny.json") + " --data " + q(d / "data") + " --out " + q(d / "run")).code ==
          0);
  done = true;
}

}  // namespace

TEST_CASE("help for every command") {
  for (const char* c : {"", "gen-data ", "train ", "eval ", "caption ", "gradcheck "}) {
    const Result r = cli(std::string(c) + "--help");
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(cli("").code == 2);
  CHECK(cli("train").code == 2);
}

TEST_CASE("gen-data files, determinism and validation") {
  const fs::path d = workdir();
  CHECK(cli("gen-data --seed 3 --out " + q(d / "g1") + " --n-train 5 --n-val 2 --n-test 2").code == 0);
  CHECK(cli("gen-data --seed 3 --out " + q(d / "g2") + " --n-train 5 --n-val 2 --n-test 2").code == 0);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "vocab.json"}) {
    std::ifstream a(d / "g1" / f), b(d / "g2" / f);
    const std::string sa(std::istreambuf_iterator<char>(a), {}), sb(std::istreambuf_iterator<char>(b), {});
    CHECK_FALSE(sa.empty());
    CHECK(sa == sb);
  }
  CHECK(cli("gen-data --out " + q(d / "g0") + " --n-train 0").code == 2);
  CHECK(cli("gen-data --out /proc/rfcm/forbidden").code == 2);
}

TEST_CASE("train outputs and config errors") {
  tiny_run();
  const fs::path run = workdir() / "run";
  for (const char* f : {"config.json", "log.jsonl", "last.ckpt", "best.ckpt"}) CHECK(fs::exists(run / f));
  std::ifstream log(run / "log.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    const json row = json::parse(line);
    for (const char* k : {"epoch", "train_ce", "train_iwp", "train_corr", "train_mse", "train_total", "val_total", "gl",
                          "stopped"}) {
      CHECK(row.contains(k));
    }
    ++rows;
  }
  CHECK(rows == 2);
  std::ifstream cfg(run / "config.json");
  const json echoed = json::parse(cfg);
  CHECK(echoed["model"]["d_rsa"] == 8);
  CHECK(echoed["seed"] == 0);

  const fs::path d = workdir();
  write(d / "bad.json", R"({"model": {"d_rssa": 3}})");
  const Result r = cli("train --config " + q(d / "bad.json") + " --data " + q(d / "data") + " --out " + q(d / "x"));
  CHECK(r.code == 2);
  CHECK(r.out.find("model.d_rssa") != std::string::npos);
  CHECK(cli("train --data " + q(d / "data") + " --out " + q(d / "x") + " --ablation nope").code == 2);

  write(d / "explode.json", R"({"model": {"d_in": 8, "d_rsa": 8, "d_enc": 8, "d_dec": 8, "heads": 2,
    "enc_layers": 1, "dec_layers": 1, "rsa_layers": 1, "max_len": 16}, "decode": {"max_len": 16},
    "train": {"max_epochs": 3, "batch_size": 8, "learning_rate": 1e300, "clip_norm": 0}})");
  const Result nan = cli("train --config " + q(d / "explode.json") + " --data " + q(d / "data") + " --out " + q(d / "n"));
  CHECK(nan.code == 3);
  CHECK(nan.out.find("epoch") != std::string::npos);
  CHECK(nan.out.find("batch") != std::string::npos);
}

TEST_CASE("eval reports and oracle ceiling") {
  tiny_run();
  const fs::path d = workdir();
  const Result r = cli("eval --checkpoint " + q(d / "run" / "best.ckpt") + " --data " + q(d / "data" / "test.jsonl") +
                       " --out " + q(d / "report.json"));
  CHECK(r.code == 0);
  std::ifstream in(d / "report.json");
  const json rep = json::parse(in);
  for (const char* k : {"n", "bleu4", "rouge_l", "meteor_basic", "cider_d", "exact_match", "per_seed"}) {
    CHECK(rep.contains(k));
  }
  CHECK(cli("eval --oracle --data " + q(d / "data" / "test.jsonl") + " --out " + q(d / "oracle.json")).code == 0);
  std::ifstream oin(d / "oracle.json");
  const json oracle = json::parse(oin);
  CHECK(oracle["bleu4"].get<double>() == doctest::Approx(1.0));
  CHECK(oracle["cider_d"].get<double>() == doctest::Approx(10.0));
  CHECK(oracle["exact_match"].get<double>() == 1.0);

  CHECK(cli("eval --checkpoint " + q(d / "missing.ckpt") + " --data " + q(d / "data" / "test.jsonl")).code == 2);
  write(d / "trunc.ckpt", "{\"version\":1");
  CHECK(cli("eval --checkpoint " + q(d / "trunc.ckpt") + " --data " + q(d / "data" / "test.jsonl")).code == 2);
  CHECK(cli("gen-data --seed 2 --out " + q(d / "wide") + " --n-train 2 --n-val 1 --n-test 2 --d-in 12").code == 0);
  CHECK(cli("eval --checkpoint " + q(d / "run" / "best.ckpt") + " --data " + q(d / "wide" / "test.jsonl")).code == 2);
}

TEST_CASE("caption output") {
  tiny_run();
  const fs::path d = workdir();
  const std::string ckpt = " --checkpoint " + q(d / "run" / "best.ckpt");
  const Result a = cli("caption" + ckpt + " --episode-id test-000001 --data " + q(d / "data" / "test.jsonl"));
  const Result b = cli("caption" + ckpt + " --episode-id test-000001 --data " + q(d / "data" / "test.jsonl"));
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  const Result j = cli("caption" + ckpt + " --episode-id test-000001 --data " + q(d / "data" / "test.jsonl") + " --json");
  REQUIRE(j.code == 0);
  const json out = json::parse(j.out);
  CHECK(out["ids"].is_array());
  CHECK(out["ids"][0] == 0);
  CHECK(out["caption"].get<std::string>() + "\n" == a.out);

  json clips = json::array();
  for (int c = 0; c < 3; ++c) clips.push_back(std::vector<double>(8, 0.1 * c));
  write(d / "clips.json", json{{"clips", clips}}.dump());
  CHECK(cli("caption" + ckpt + " --clips " + q(d / "clips.json")).code == 0);
  write(d / "bad_clips.json", "[[1, 2], [3");
  CHECK(cli("caption" + ckpt + " --clips " + q(d / "bad_clips.json")).code == 2);
  write(d / "short_clips.json", "[[1, 2]]");
  CHECK(cli("caption" + ckpt + " --clips " + q(d / "short_clips.json")).code == 2);
  CHECK(cli("caption" + ckpt + " --episode-id nope --data " + q(d / "data" / "test.jsonl")).code == 2);
}

TEST_CASE("gradcheck command") {
  const Result ok = cli("gradcheck --scope ops --tolerance 1e-4");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("gelu") != std::string::npos);
  const Result bad = cli("gradcheck --scope ops --inject-fault");
  CHECK(bad.code != 0);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(cli("gradcheck --scope kernels").code == 2);
}
