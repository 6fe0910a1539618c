#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "app/commands.h"
#include "app/run_config.h"
#include "core/error.h"
#include "rssl/rssl.h"
#include "support.h"

using namespace rssl;
using rssl::testing::TempDir;
using nlohmann::json;

namespace {

  void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
  }

  std::string error_code(const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return "";
  }

  // Small, fast run configuration for end-to-end command checks.
  RunConfig quick_config() {
    RunConfig c;
    c.model = rssl::testing::tiny_config();
    c.model.vocab = std::string("_ ") + kToyAlphabet;
    for (TrainMode m : {TrainMode::Pretrain, TrainMode::Continual, TrainMode::Finetune}) {
      c.spec(m).steps = 2;
      c.spec(m).batch_size = 2;
      c.spec(m).log_every = 0;
    }
    c.corpus.n_utts = 6;
    c.corpus.n_noise = 2;
    c.pipeline.test_utts = 2;
    c.pipeline.dev_utts = 1;
    c.decode.tune_lm_weights = {0.0, 0.5};
    c.decode.tune_insertion_penalties = {0.0};
    c.decode.beam_size = 4;
    return c;
  }

  struct CommandResult {
    int exit_code = -1;
    std::string output;
  };

  CommandResult run_cli(const std::string& args) {
    const std::string cmd = std::string(RSSL_CLI_PATH) + " " + args + " 2>&1";
    CommandResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe))
      r.output += buf;
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

}

TEST_CASE("config: file sections, unknown keys, missing file") {
  TempDir dir("config");
  write_text(dir / "ok.json", R"({"model": {"model_dim": 32, "attention_heads": 2},
                                  "train": {"finetune": {"steps": 7}},
                                  "decode": {"mode": "beam", "beam_size": 3}})");
  const RunConfig c = load_run_config(dir / "ok.json");
  CHECK(c.model.model_dim == 32);
  CHECK(c.finetune.steps == 7);
  CHECK(c.finetune.mode == TrainMode::Finetune);
  CHECK(c.decode.mode == DecodeMode::Beam);
  CHECK(c.decode.beam_size == 3);

  write_text(dir / "unknown.json", R"({"model": {"model_dimm": 32}})");
  try {
    load_run_config(dir / "unknown.json");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("model_dimm") != std::string::npos);
  }
  write_text(dir / "toplevel.json", R"({"modle": {}})");
  CHECK_THROWS_AS(load_run_config(dir / "toplevel.json"), Error);
  write_text(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), Error);

  try {
    load_run_config(dir / "absent.json");
    FAIL("expected MissingConfig");
  } catch (const Error& e) {
    CHECK(e.code() == "MissingConfig");
    CHECK(e.kind() == ErrorKind::Usage);
  }
}

TEST_CASE("config: overrides merge and revalidate, round trip through JSON") {
  const RunConfig base;
  const RunConfig c = apply_overrides(base, json::parse(R"({"train": {"continual": {"learning_rate": 0.01}},
                                                            "model": {"mask_prob": 0.2}})"));
  CHECK(c.continual.learning_rate == 0.01);
  CHECK(c.model.mask_prob == 0.2);
  CHECK(c.pretrain.learning_rate == base.pretrain.learning_rate);
  CHECK_THROWS_AS(apply_overrides(base, json::parse(R"({"model": {"mask_prob": 2.0}})")), Error);
  CHECK_THROWS_AS(apply_overrides(base, json::parse(R"({"train": {"finetune": {"steps": 0}}})")), Error);

  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  const auto cell = parse_ablation_cell("quantized/blstm");
  CHECK(cell.first == ReconAttach::Quantized);
  CHECK(cell.second == ReconBottleneck::Blstm);
  CHECK_THROWS_AS(parse_ablation_cell("context"), Error);
}

TEST_CASE("plot: three records give three points per series") {
  TempDir dir("plot");
  write_text(dir / "metrics.jsonl",
             R"({"step":1,"L_c":3.0,"L_d":0.5,"L_r":0.2,"total":3.07}
{"step":2,"L_c":2.5,"L_d":0.4,"L_r":0.2,"total":2.56}
this line is garbage
{"step":3,"L_c":2.0,"L_d":0.3,"L_r":0.1,"total":2.04}
)");
  const PlotOutputs out = cmd_plot(dir / "metrics.jsonl", std::nullopt, dir / "plots", {});
  CHECK(out.points == 3);
  CHECK(out.skipped_lines == 1);
  const std::string svg = rssl::testing::read_bytes(dir / "plots" / "loss_curves.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("data-series=\"L_c\"") != std::string::npos);
  CHECK(svg.find("data-points=\"3\"") != std::string::npos);
  const std::string csv = rssl::testing::read_bytes(dir / "plots" / "loss_curves.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  write_text(dir / "empty.jsonl", "");
  try {
    cmd_plot(dir / "empty.jsonl", std::nullopt, dir / "plots2", {});
    FAIL("expected EmptyLog");
  } catch (const Error& e) {
    CHECK(e.code() == "EmptyLog");
  }
  CHECK_THROWS_AS(cmd_plot(std::nullopt, std::nullopt, dir / "plots3", {}), Error);
}

TEST_CASE("plot: ablation report becomes a four-row table") {
  TempDir dir("plot_ablation");
  AblationReport report;
  const AblationCell cells[] = {{ReconAttach::Context, ReconBottleneck::Crn},
                                {ReconAttach::Latent, ReconBottleneck::Crn},
                                {ReconAttach::Quantized, ReconBottleneck::Crn},
                                {ReconAttach::Context, ReconBottleneck::Blstm}};
  double wer = 0.5;
  for (const auto& cell : cells) {
    AblationRow row;
    row.cell = cell;
    row.label = ablation_label(cell);
    row.wer = wer;
    wer += 0.1;
    row.data_hash = "abc";
    report.rows.push_back(row);
  }
  std::ofstream(dir / "ablation.json") << to_json(report).dump();
  cmd_plot(std::nullopt, dir / "ablation.json", dir / "out", {});
  const std::string md = rssl::testing::read_bytes(dir / "out" / "ablation_table.md");
  for (const char* label : {"Proposed", "BeforeQuantization", "AfterQuantization", "BLSTM"})
    CHECK(md.find(label) != std::string::npos);
  // header + separator + 4 rows
  CHECK(std::count(md.begin(), md.end(), '\n') >= 6);
  const AblationReport back = ablation_report_from_json(to_json(report));
  REQUIRE(back.rows.size() == 4);
  CHECK(*back.rows[3].wer == doctest::Approx(0.8));
}

TEST_CASE("pipeline: evaluate alone without a fine-tuned checkpoint names the stage") {
  TempDir dir("pipe_missing");
  try {
    cmd_pipeline(quick_config(), dir.path(), std::string("evaluate"), {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage evaluate") != std::string::npos);
  }
  CHECK(error_code([&] { cmd_pipeline(quick_config(), dir.path(), std::string("bogus"), {}); }) != "");
}

TEST_CASE("pipeline: every stage runs and leaves its artifacts") {
  TempDir dir("pipe");
  std::vector<std::string> log;
  const json summary = cmd_pipeline(quick_config(), dir.path(), std::nullopt,
                                    [&](const std::string& m) { log.push_back(m); });
  for (const char* f : {"corpus/clean.jsonl", "mixed/train.jsonl", "mixed/dev.jsonl", "mixed/test.jsonl",
                        "pretrain/final.ckpt", "continual/final.ckpt", "finetune/final.ckpt",
                        "evaluate/results_greedy.jsonl", "evaluate/results.jsonl", "evaluate/lm.json",
                        "summary.json", "summary.md"})
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  CHECK(load_manifest(dir / "mixed" / "test.jsonl").size() == 2);
  CHECK(load_manifest(dir / "mixed" / "dev.jsonl").size() == 1);
  CHECK(load_manifest(dir / "mixed" / "train.jsonl").size() == 3);
  CHECK(summary.dump().find("wer") != std::string::npos);
  CHECK_FALSE(log.empty());

  // Rerunning one stage reuses the earlier artifacts.
  CHECK_NOTHROW(cmd_pipeline(quick_config(), dir.path(), std::string("evaluate"), {}));
}

TEST_CASE("c api: status codes, exit codes and error text") {
  CHECK(rssl_exit_code(RSSL_OK) == 0);
  CHECK(rssl_exit_code(RSSL_ERR_USAGE) == 1);
  CHECK(rssl_exit_code(RSSL_ERR_CONFIG) == 1);
  CHECK(rssl_exit_code(RSSL_ERR_IO) == 2);
  CHECK(rssl_exit_code(RSSL_ERR_DATA) == 2);
  CHECK(rssl_exit_code(RSSL_ERR_NUMERIC) == 3);
  CHECK(rssl_exit_code(RSSL_ERR_INTERNAL) == 2);
  CHECK(std::string(rssl_version()).size() > 0);

  rssl_context* ctx = rssl_context_new();
  REQUIRE(ctx != nullptr);
  rssl_config* cfg = nullptr;
  CHECK(rssl_config_load(ctx, "/nonexistent/config.json", &cfg) == RSSL_ERR_USAGE);
  CHECK(std::string(rssl_last_error_code(ctx)) == "MissingConfig");
  CHECK(cfg == nullptr);

  REQUIRE(rssl_config_default(ctx, &cfg) == RSSL_OK);
  CHECK(rssl_config_patch(ctx, cfg, R"({"model": {"bogus": 1}})") == RSSL_ERR_CONFIG);
  CHECK(rssl_config_patch(ctx, cfg, "{broken") == RSSL_ERR_CONFIG);
  CHECK(rssl_config_patch(ctx, cfg, R"({"train": {"finetune": {"steps": 9}}})") == RSSL_OK);
  char* text = nullptr;
  REQUIRE(rssl_config_to_json(ctx, cfg, &text) == RSSL_OK);
  CHECK(json::parse(text)["train"]["finetune"]["steps"] == 9);
  rssl_string_free(text);

  double w = -1.0;
  CHECK(rssl_wer(ctx, "a b c", "a x c", &w) == RSSL_OK);
  CHECK(w == doctest::Approx(1.0 / 3.0));
  CHECK(rssl_wer(ctx, "", "a", &w) == RSSL_ERR_DATA);
  CHECK(std::string(rssl_last_error_code(ctx)) == "EmptyReference");
  CHECK(rssl_wer(ctx, nullptr, "a", &w) == RSSL_ERR_USAGE);

  CHECK(rssl_evaluate(ctx, cfg, "/nonexistent.ckpt", "/nonexistent.jsonl", "/tmp/x", nullptr) != RSSL_OK);
  CHECK(std::string(rssl_last_error(ctx)).size() > 0);

  std::vector<double> clean(1600), noise(800), noisy(1600), clean_out(1600);
  for (std::size_t i = 0; i < clean.size(); ++i)
    clean[i] = 0.3 * std::sin(0.01 * static_cast<double>(i));
  for (std::size_t i = 0; i < noise.size(); ++i)
    noise[i] = 0.1 * std::cos(0.37 * static_cast<double>(i * i));
  double measured = 0.0;
  CHECK(rssl_mix_at_snr(ctx, clean.data(), clean.size(), noise.data(), noise.size(), 16000, 10.0, 3, noisy.data(),
                        clean_out.data(), &measured) == RSSL_OK);
  CHECK(std::abs(measured - 10.0) < 0.01);
  std::vector<double> silent(1600, 0.0);
  CHECK(rssl_mix_at_snr(ctx, silent.data(), silent.size(), noise.data(), noise.size(), 16000, 10.0, 3, noisy.data(),
                        clean_out.data(), &measured) == RSSL_ERR_DATA);

  rssl_config_free(cfg);
  rssl_context_free(ctx);
}

TEST_CASE("c api: corpus, training and evaluation through the handle interface") {
  TempDir dir("capi_run");
  rssl_context* ctx = rssl_context_new();
  int messages = 0;
  rssl_set_log_callback(ctx, [](const char*, void* user) { ++*static_cast<int*>(user); }, &messages);
  rssl_config* cfg = nullptr;
  REQUIRE(rssl_config_default(ctx, &cfg) == RSSL_OK);
  REQUIRE(rssl_config_patch(ctx, cfg, to_json(quick_config()).dump().c_str()) == RSSL_OK);

  const std::string toy = (dir / "toy").string(), mixed = (dir / "mixed").string();
  REQUIRE(rssl_make_toy_corpus(ctx, toy.c_str(), 5, 3, 1) == RSSL_OK);
  REQUIRE(rssl_mix(ctx, (toy + "/clean.jsonl").c_str(), (toy + "/noise.jsonl").c_str(), mixed.c_str(), 5, 5, 20)
          == RSSL_OK);

  const std::string clean = toy + "/clean.jsonl", noisy = mixed + "/noisy.jsonl";
  const char* clean_list[] = {clean.c_str()};
  const char* noisy_list[] = {noisy.c_str()};
  const std::string pre = (dir / "pre").string(), cont = (dir / "cont").string(), ft = (dir / "ft").string();
  REQUIRE(rssl_train(ctx, cfg, "pretrain", clean_list, 1, nullptr, pre.c_str()) == RSSL_OK);
  REQUIRE(rssl_train(ctx, cfg, "continual", noisy_list, 1, (pre + "/final.ckpt").c_str(), cont.c_str()) == RSSL_OK);
  REQUIRE(rssl_train(ctx, cfg, "finetune", clean_list, 1, (cont + "/final.ckpt").c_str(), ft.c_str()) == RSSL_OK);
  double w = -1.0;
  REQUIRE(rssl_evaluate(ctx, cfg, (ft + "/final.ckpt").c_str(), clean.c_str(), (dir / "r.jsonl").c_str(), &w)
          == RSSL_OK);
  CHECK(std::isfinite(w));
  CHECK(w >= 0.0);
  CHECK(rssl_train(ctx, cfg, "sideways", clean_list, 1, nullptr, pre.c_str()) == RSSL_ERR_USAGE);
  CHECK(rssl_train(ctx, cfg, "continual", clean_list, 1, nullptr, pre.c_str()) == RSSL_ERR_USAGE);
  CHECK(rssl_build_lm(ctx, cfg, clean_list, 1, (dir / "lm.json").c_str()) == RSSL_OK);
  CHECK(std::filesystem::exists(dir / "lm.json"));
  CHECK(messages > 0);

  rssl_config_free(cfg);
  rssl_context_free(ctx);
}

TEST_CASE("cli: exit codes") {
  TempDir dir("cli");
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("--version").exit_code == 0);
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("frobnicate").exit_code == 1);
  CHECK(run_cli("evaluate --manifest m.jsonl").exit_code == 1);

  const auto missing_cfg = run_cli("evaluate --config " + (dir / "nope.json").string()
                                    + " --ckpt x.ckpt --manifest m.jsonl --out r.jsonl");
  CHECK(missing_cfg.exit_code == 1);
  CHECK(missing_cfg.output.find("MissingConfig") != std::string::npos);

  write_text(dir / "bad.json", R"({"model": {"colour": 1}})");
  CHECK(run_cli("evaluate --config " + (dir / "bad.json").string() + " --ckpt x.ckpt --manifest m.jsonl --out r.jsonl")
            .exit_code == 1);
  CHECK(run_cli("evaluate --set model=1 --ckpt x.ckpt --manifest m.jsonl --out r.jsonl").exit_code == 1);

  const auto absent = run_cli("evaluate --ckpt " + (dir / "absent.ckpt").string() + " --manifest "
                              + (dir / "absent.jsonl").string() + " --out " + (dir / "r.jsonl").string());
  CHECK(absent.exit_code == 1);
  CHECK(absent.output.find("MissingCheckpoint") != std::string::npos);

  write_text(dir / "junk.ckpt", "garbage");
  write_text(dir / "empty.jsonl", "");
  const auto corrupt = run_cli("evaluate --ckpt " + (dir / "junk.ckpt").string() + " --manifest "
                               + (dir / "empty.jsonl").string() + " --out " + (dir / "r.jsonl").string());
  CHECK(corrupt.exit_code == 2);

  const std::string toy = (dir / "toy").string();
  const auto made = run_cli("-q make-toy-corpus --out " + toy + " --n-utts 2 --n-noise 1");
  CHECK(made.exit_code == 0);
  CHECK(made.output.find("[rssl]") == std::string::npos);
  CHECK(std::filesystem::exists(dir / "toy" / "clean.jsonl"));
  CHECK(run_cli("make-toy-corpus --out " + toy + " --n-utts 0").exit_code == 1);

  write_text(dir / "m.jsonl", "{\"metrics\": true}\n");
  const auto plot = run_cli("plot --log " + (dir / "m.jsonl").string() + " --out " + (dir / "plots").string());
  CHECK(plot.exit_code == 2);
  CHECK(plot.output.find("EmptyLog") != std::string::npos);
}
