#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("mbbr_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  std::string cmd = std::string(MBBR_BIN) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  if (status < 0) return -1;
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// small grid: 80 scenes keeps every predicate above the 2-shot threshold
const char* kBaseConfig = R"({
  "seed": 11,
  "synth": {"num_scenes": 80, "min_entities": 3, "max_entities": 5,
            "num_categories": 6, "num_predicates": 8},
  "pretrain": {"epochs": 2, "batch_size": 8, "learning_rate": 0.002,
               "mask_ratio": 0.5,
               "encoder": {"num_layers": 1, "num_heads": 2,
                           "model_dim": 16, "ffn_dim": 32}},
  "fewshot": {"epochs": 2},
  "eval": {"k_shots": [2], "seeds": [1], "recall_n": 20}
})";

json base_config() { return json::parse(kBaseConfig); }

}  // namespace

TEST_CASE("synth is byte-identical across reruns into the same directory") {
  Workspace ws;
  spit(ws.path("exp.json"), kBaseConfig);
  std::string args = "synth --config " + ws.path("exp.json") + " --out " + ws.path("d");
  REQUIRE(run(args) == 0);
  std::string scenes = slurp(ws.path("d/scenes.jsonl"));
  std::string manifest = slurp(ws.path("d/manifest.json"));
  REQUIRE(run(args) == 0);
  CHECK(slurp(ws.path("d/scenes.jsonl")) == scenes);
  CHECK(slurp(ws.path("d/manifest.json")) == manifest);
}

TEST_CASE("synth with zero scenes writes an empty dataset plus metadata") {
  Workspace ws;
  json cfg = base_config();
  cfg["synth"]["num_scenes"] = 0;
  spit(ws.path("exp.json"), cfg.dump());
  REQUIRE(run("synth --config " + ws.path("exp.json") + " --out " + ws.path("d")) == 0);
  CHECK(slurp(ws.path("d/scenes.jsonl")).empty());
  CHECK(fs::exists(ws.path("d/manifest.json")));
  CHECK(fs::exists(ws.path("d/config.json")));
}

TEST_CASE("manifest hash tracks the resolved config") {
  Workspace ws;
  spit(ws.path("a.json"), kBaseConfig);
  json cfg = base_config();
  cfg["pretrain"]["mask_ratio"] = 0.25;
  spit(ws.path("b.json"), cfg.dump());
  REQUIRE(run("synth --config " + ws.path("a.json") + " --out " + ws.path("da")) == 0);
  REQUIRE(run("synth --config " + ws.path("b.json") + " --out " + ws.path("db")) == 0);
  json ma = json::parse(slurp(ws.path("da/manifest.json")));
  json mb = json::parse(slurp(ws.path("db/manifest.json")));
  CHECK(ma["config_hash"] != mb["config_hash"]);
  CHECK(ma["seed"] == 11);

  // same config except out dir: hashes differ because the echo differs
  REQUIRE(run("synth --config " + ws.path("a.json") + " --out " + ws.path("dc")) == 0);
  json mc = json::parse(slurp(ws.path("dc/manifest.json")));
  CHECK(ma["config_hash"] != mc["config_hash"]);
}

TEST_CASE("seed flag wins over the config file") {
  Workspace ws;
  spit(ws.path("exp.json"), kBaseConfig);
  REQUIRE(run("synth --config " + ws.path("exp.json") + " --seed 99 --out " +
              ws.path("d")) == 0);
  json echoed = json::parse(slurp(ws.path("d/config.json")));
  CHECK(echoed["seed"] == 99);
}

TEST_CASE("pretrain logs one loss per epoch and reruns bit-exact") {
  Workspace ws;
  spit(ws.path("exp.json"), kBaseConfig);
  REQUIRE(run("synth --config " + ws.path("exp.json") + " --out " + ws.path("data")) == 0);
  json cfg = base_config();
  cfg["data"] = {{"train", ws.path("data/scenes.jsonl")}};
  spit(ws.path("run.json"), cfg.dump());
  std::string args =
      "pretrain --config " + ws.path("run.json") + " --out " + ws.path("p");
  REQUIRE(run(args) == 0);
  json log = json::parse(slurp(ws.path("p/training_log.json")));
  CHECK(log["epoch_losses"].size() == 2);
  CHECK(log["epoch_losses"][0].get<double>() > 0.0);

  std::string ckpt = slurp(ws.path("p/checkpoint.bin"));
  std::string logtext = slurp(ws.path("p/training_log.json"));
  REQUIRE(run(args) == 0);
  CHECK(slurp(ws.path("p/checkpoint.bin")) == ckpt);
  CHECK(slurp(ws.path("p/training_log.json")) == logtext);
}

TEST_CASE("finetune, eval, and export-attention consume a pretrain checkpoint") {
  Workspace ws;
  spit(ws.path("exp.json"), kBaseConfig);
  REQUIRE(run("synth --config " + ws.path("exp.json") + " --out " + ws.path("data")) == 0);
  json cfg = base_config();
  cfg["data"] = {{"train", ws.path("data/scenes.jsonl")}};
  spit(ws.path("run.json"), cfg.dump());
  REQUIRE(run("pretrain --config " + ws.path("run.json") + " --out " + ws.path("p")) == 0);
  std::string ckpt = " --checkpoint " + ws.path("p/checkpoint.bin");

  REQUIRE(run("finetune --config " + ws.path("run.json") + ckpt + " --out " +
              ws.path("f")) == 0);
  CHECK(fs::exists(ws.path("f/classifier.bin")));
  std::string preds = slurp(ws.path("f/predictions.jsonl"));
  CHECK(preds.find("\"scores\"") != std::string::npos);

  REQUIRE(run("eval --config " + ws.path("run.json") + ckpt + " --out " +
              ws.path("e")) == 0);
  json report = json::parse(slurp(ws.path("e/report.json")));
  REQUIRE(report["cells"].size() == 2);  // one k_shot, graph + no_graph
  for (const auto& cell : report["cells"]) {
    CHECK(cell["per_seed"].size() == 1);
    CHECK(cell["mean"].get<double>() >= 0.0);
    CHECK(cell["mean"].get<double>() <= 1.0);
    CHECK(cell["std"].get<double>() == 0.0);  // single seed
  }
  CHECK(report.contains("paper_reference"));

  REQUIRE(run("export-attention --config " + ws.path("run.json") + ckpt +
              " --out " + ws.path("x")) == 0);
  json att = json::parse(slurp(ws.path("x/attention.json")));
  REQUIRE(att.is_array());
  REQUIRE(!att.empty());
  CHECK(att[0].contains("layers"));
  CHECK(att[0].contains("entities"));
}

TEST_CASE("eval reruns produce byte-identical reports") {
  Workspace ws;
  json cfg = base_config();
  cfg["synth"]["num_scenes"] = 60;
  spit(ws.path("run.json"), cfg.dump());
  REQUIRE(run("pretrain --config " + ws.path("run.json") + " --out " + ws.path("p")) == 0);
  std::string args = "eval --config " + ws.path("run.json") + " --checkpoint " +
                     ws.path("p/checkpoint.bin") + " --out " + ws.path("e");
  REQUIRE(run(args) == 0);
  std::string report = slurp(ws.path("e/report.json"));
  REQUIRE(run(args) == 0);
  CHECK(slurp(ws.path("e/report.json")) == report);
}

TEST_CASE("error paths map to distinct exit codes") {
  Workspace ws;
  spit(ws.path("bad.json"), "{nope");
  CHECK(run("synth --config " + ws.path("bad.json")) == 2);

  json cfg = base_config();
  cfg["pretrain"]["mask_ratio"] = 1.5;
  spit(ws.path("range.json"), cfg.dump());
  CHECK(run("pretrain --config " + ws.path("range.json") + " --out " +
            ws.path("d")) == 2);

  json unk = base_config();
  unk["mystery"] = 1;
  spit(ws.path("unk.json"), unk.dump());
  CHECK(run("synth --config " + ws.path("unk.json") + " --out " + ws.path("d")) == 2);

  json missing = base_config();
  missing["data"] = {{"train", ws.path("nowhere.jsonl")}};
  spit(ws.path("missing.json"), missing.dump());
  CHECK(run("pretrain --config " + ws.path("missing.json") + " --out " +
            ws.path("d")) == 3);

  spit(ws.path("exp.json"), kBaseConfig);
  CHECK(run("synth --config " + ws.path("exp.json") + " --badflag") == 2);
  CHECK(run("finetune --config " + ws.path("exp.json")) == 2);  // checkpoint required
  CHECK(run("eval --config " + ws.path("exp.json") + " --checkpoint " +
            ws.path("nope.bin") + " --out " + ws.path("d")) == 3);
}

TEST_CASE("f32 precision is recorded in the checkpoint header") {
  Workspace ws;
  spit(ws.path("exp.json"), kBaseConfig);
  REQUIRE(run("pretrain --config " + ws.path("exp.json") + " --precision f32 --out " +
              ws.path("p")) == 0);
  std::string ckpt = slurp(ws.path("p/checkpoint.bin"));
  REQUIRE(ckpt.size() > 13);
  CHECK(ckpt.substr(0, 8) == "MBBRCKPT");
  CHECK(ckpt[12] == 1);  // dtype byte after the u32 format version
  json echoed = json::parse(slurp(ws.path("p/config.json")));
  CHECK(echoed["precision"] == "f32");
}
