#include "train/ablation.h"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "core/error.h"
#include "data/manifest.h"
#include "eval/evaluate.h"

namespace rssl {

  namespace fs = std::filesystem;
  using nlohmann::json;

  std::string ablation_label(const AblationCell& cell) {
    if (cell.bottleneck == ReconBottleneck::Blstm)
      return cell.attach == ReconAttach::Context ? "BLSTM" : "BLSTM/" + to_string(cell.attach);
    switch (cell.attach) {
    case ReconAttach::Context: return "Proposed";
    case ReconAttach::Latent: return "BeforeQuantization";
    case ReconAttach::Quantized: return "AfterQuantization";
    }
    return "Proposed";
  }

  std::string manifest_data_hash(const std::vector<fs::path>& manifests) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const fs::path& file) {
      std::ifstream is(file, std::ios::binary);
      if (!is)
        fail(ErrorKind::Io, "IoError", "cannot read " + file.string());
      for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& m : manifests)
      for (const auto& e : load_manifest(m).entries) {
        feed(e.audio_path);
        if (e.clean_path)
          feed(*e.clean_path);
      }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  AblationReport run_ablation(const AblationPlan& plan, const std::function<void(const std::string&)>& log) {
    if (plan.cells.empty())
      fail(ErrorKind::Config, "InvalidConfig", "ablation needs at least one cell");
    const std::string data_hash = manifest_data_hash(plan.train_data);
    const Manifest eval_manifest = load_manifest(plan.eval_manifest);
    TrainHooks hooks;
    hooks.log = log;

    AblationReport report;
    for (const auto& cell : plan.cells) {
      AblationRow row;
      row.cell = cell;
      row.label = ablation_label(cell);
      row.data_hash = data_hash;
      const std::string name = to_string(cell.attach) + "_" + to_string(cell.bottleneck);
      const fs::path cell_dir = plan.out_dir / name;
      if (log)
        log("ablation cell " + name + " (" + row.label + ")");
      try {
        ModelConfig config = plan.model;
        config.recon_attach = cell.attach;
        config.recon_bottleneck = cell.bottleneck;

        TrainSpec cont = plan.continual;
        cont.mode = TrainMode::Continual;
        cont.data = plan.train_data;
        cont.init_checkpoint = plan.init_checkpoint;
        cont.out_dir = cell_dir / "continual";
        if (!(cont.weights.reconstruction > 0.0))
          fail(ErrorKind::Config, "InvalidConfig", "ablation cells need a positive reconstruction weight");
        TrainResult pre = train(cont, config, hooks);
        if (!pre.history.empty()) {
          row.continual_total = pre.history.back().losses.total;
          row.reconstruction_loss = pre.history.back().losses.reconstruction;
        }

        const std::vector<TrainItem> items = load_training_items(plan.train_data, TrainMode::Continual, config, true);
        const auto grads = reconstruction_gradient_norms(pre.model, items.front(), cont);
        double mx = 0.0;
        for (const auto& [pname, g] : grads)
          if (pname.starts_with("context."))
            mx = std::max(mx, g);
        row.transformer_grad_max = mx;
        const bool bypass = cell.attach != ReconAttach::Context;
        row.gradient_check_passed = bypass ? mx <= 1e-12 : mx > 1e-12;

        TrainSpec ft = plan.finetune;
        ft.mode = TrainMode::Finetune;
        ft.data = plan.train_data;
        ft.init_checkpoint = *pre.final_checkpoint;
        ft.out_dir = cell_dir / "finetune";
        TrainResult tuned = train(ft, config, hooks);

        const EvaluationResult eval = evaluate(tuned.model, eval_manifest, plan.decode);
        write_results(eval, cell_dir / "results.jsonl");
        row.wer = eval.corpus_wer();
      } catch (const Error& e) {
        row.error = std::string(e.what());
        if (log)
          log("ablation cell " + name + " failed: " + *row.error);
      }
      report.rows.push_back(std::move(row));
    }
    return report;
  }

  namespace {
    template <class T>
    json opt(const std::optional<T>& v) {
      return v ? json(*v) : json(nullptr);
    }

    template <class T>
    std::optional<T> get_opt(const json& j, const char* key) {
      if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
      return j.at(key).get<T>();
    }
  }

  json to_json(const AblationReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
      rows.push_back({
        {"label", r.label},
        {"recon_attach", to_string(r.cell.attach)},
        {"recon_bottleneck", to_string(r.cell.bottleneck)},
        {"wer", opt(r.wer)},
        {"continual_total", opt(r.continual_total)},
        {"reconstruction_loss", opt(r.reconstruction_loss)},
        {"transformer_grad_max", opt(r.transformer_grad_max)},
        {"gradient_check_passed", opt(r.gradient_check_passed)},
        {"data_hash", r.data_hash},
        {"error", opt(r.error)},
      });
    return {{"rows", rows}};
  }

  AblationReport ablation_report_from_json(const json& j) {
    AblationReport report;
    try {
      for (const auto& r : j.at("rows")) {
        AblationRow row;
        row.label = r.at("label").get<std::string>();
        row.cell.attach = recon_attach_from_string(r.at("recon_attach").get<std::string>());
        row.cell.bottleneck = recon_bottleneck_from_string(r.at("recon_bottleneck").get<std::string>());
        row.wer = get_opt<double>(r, "wer");
        row.continual_total = get_opt<double>(r, "continual_total");
        row.reconstruction_loss = get_opt<double>(r, "reconstruction_loss");
        row.transformer_grad_max = get_opt<double>(r, "transformer_grad_max");
        row.gradient_check_passed = get_opt<bool>(r, "gradient_check_passed");
        row.data_hash = r.value("data_hash", std::string());
        row.error = get_opt<std::string>(r, "error");
        report.rows.push_back(std::move(row));
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::Data, "BadReport", std::string("ablation report: ") + e.what());
    }
    return report;
  }

  std::string render_ablation_table(const AblationReport& report) {
    auto num = [](const std::optional<double>& v, int precision) {
      if (!v)
        return std::string("n/a");
      std::ostringstream os;
      os.precision(precision);
      os << *v;
      return os.str();
    };
    std::ostringstream os;
    os << "| Model | Attach | Bottleneck | WER (%) | Final total loss | dL_r/d(transformer) max | Gradient check |\n";
    os << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
      os << "| " << r.label << " | " << to_string(r.cell.attach) << " | " << to_string(r.cell.bottleneck) << " | "
         << (r.wer ? num(*r.wer * 100.0, 4) : "failed") << " | " << num(r.continual_total, 4) << " | "
         << num(r.transformer_grad_max, 3) << " | "
         << (r.gradient_check_passed ? (*r.gradient_check_passed ? "pass" : "FAIL") : "n/a") << " |\n";
    }
    return os.str();
  }

}
