#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "avid/checkpoint.hpp"
#include "avid/eval.hpp"

namespace avid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::trunc) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::out | mode);
  if (!f) fail(ErrorCode::Io, "cannot write " + p.string());
  return f;
}

std::string last_line(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::Io, "cannot read " + p.string());
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) fail(ErrorCode::Parse, p.string() + " is empty");
  return last;
}

// --key=value / --key value pairs left over after the declared flags.
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) fail(ErrorCode::InvalidConfig, "unexpected argument '" + tok + "'");
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      set_value(cfg, tok.substr(2, eq - 2), tok.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) fail(ErrorCode::InvalidConfig, "missing value for " + tok);
      set_value(cfg, tok.substr(2), extras[++i]);
    }
  }
}

TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& extras,
                           const std::optional<std::uint64_t>& seed) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  apply_overrides(cfg, extras);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

RunPaths::RunPaths(fs::path d)
    : dir(std::move(d)),
      manifest(dir / "manifest.txt"),
      metrics(dir / "metrics.jsonl"),
      checkpoint(dir / "checkpoint.txt"),
      dataset(dir / "dataset.tsv") {}

std::string metrics_record(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["loss_v2a"] = m.loss_v2a;
  j["loss_a2v"] = m.loss_a2v;
  j["mean_weight"] = m.mean_weight;
  j["faulty_neg_rate"] = opt(m.faulty_neg_rate);
  j["classifier_agreement"] = opt(m.classifier_agreement);
  j["purity"] = opt(m.purity);
  j["nmi"] = opt(m.nmi);
  j["probe_acc"] = opt(m.probe_acc);
  return j.dump();
}

TrainResult train_run(const TrainConfig& cfg, const RunPaths& paths, std::ostream* progress) {
  cfg.validate();
  fs::create_directories(paths.dir);
  {
    auto f = open_out(paths.manifest);
    write_config(f, cfg);
    f << "run.seed=" << cfg.seed << '\n'
      << "run.start_time=" << utc_now() << '\n'
      << "run.metrics=" << paths.metrics.filename().string() << '\n'
      << "run.checkpoint=" << paths.checkpoint.filename().string() << '\n'
      << "run.dataset=" << paths.dataset.filename().string() << '\n';
  }
  const Dataset data = generate(cfg.data_config());
  save_dataset(data, paths.dataset);

  auto metrics = open_out(paths.metrics);
  auto on_epoch = [&](const EpochMetrics& m, const TrainState& s) {
    metrics << metrics_record(m) << '\n' << std::flush;
    if (cfg.checkpoint_every > 0 && m.epoch % cfg.checkpoint_every == 0 && m.epoch < cfg.epochs)
      save_checkpoint(s, paths.dir / ("checkpoint-epoch-" + std::to_string(m.epoch) + ".txt"));
    if (progress && m.probe_acc) {
      *progress << "epoch " << m.epoch << "  loss " << std::fixed << std::setprecision(4)
                << m.loss_v2a + m.loss_a2v << "  agreement "
                << m.classifier_agreement.value_or(NAN) << "  probe " << *m.probe_acc << '\n'
                << std::defaultfloat;
    }
  };
  auto result = train(cfg, data, on_epoch);
  save_checkpoint(result.state, paths.checkpoint);
  return result;
}

std::string eval_run(const EvalOptions& o, std::ostream* summary) {
  TrainState state = load_checkpoint(o.checkpoint);
  const Dataset data = load_dataset(o.dataset);
  const std::size_t ck_a = state.audio.input_dim(), ck_v = state.visual.input_dim();
  if (data.config.dim_a != ck_a || data.config.dim_v != ck_v) {
    fail(ErrorCode::ShapeMismatch,
         "checkpoint expects audio dim " + std::to_string(ck_a) + " and visual dim " +
             std::to_string(ck_v) + " but dataset has audio dim " +
             std::to_string(data.config.dim_a) + " and visual dim " +
             std::to_string(data.config.dim_v));
  }
  if (data.size() != state.pseudo.size()) {
    fail(ErrorCode::LengthMismatch, "checkpoint holds " + std::to_string(state.pseudo.size()) +
                                        " samples but dataset has " + std::to_string(data.size()));
  }
  const std::uint64_t seed = o.seed.value_or(state.config.seed);
  const auto& cfg = state.config;
  const ProbeSettings ps{cfg.probe_split, cfg.probe_lr, cfg.probe_steps, derive_seed(seed, "probe")};
  const auto inputs = data.inputs();
  const auto qa = embed_audio(state, inputs);
  const auto qv = embed_visual(state, inputs);
  const auto pa = linear_probe(qa, data.classes, ps);
  const auto pv = linear_probe(qv, data.classes, ps);

  // Chance baseline: the same probe on labels shuffled once.
  std::vector<int> shuffled = data.classes;
  auto rng = make_rng(seed, "eval/shuffle");
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const double chance = 0.5 * (linear_probe(qa, shuffled, ps).test_accuracy +
                               linear_probe(qv, shuffled, ps).test_accuracy);

  const auto predicted = predict_labels(state, inputs);
  const auto cm = cluster_metrics(predicted, data.classes);
  const double agreement = matched_accuracy(predicted, data.classes);
  const auto diag = mining_diagnostics(state, data.classes);
  const double probe = 0.5 * (pa.test_accuracy + pv.test_accuracy);

  // Paths relative to the record, so a run directory can be moved or compared.
  auto shown = [&](const fs::path& p) {
    if (o.record.empty()) return p.string();
    return fs::absolute(p).lexically_relative(fs::absolute(o.record).parent_path()).string();
  };
  json j;
  j["checkpoint"] = shown(o.checkpoint);
  j["dataset"] = shown(o.dataset);
  j["seed"] = seed;
  j["epoch"] = state.epoch;
  j["samples"] = data.size();
  j["probe_acc"] = probe;
  j["probe_acc_audio"] = pa.test_accuracy;
  j["probe_acc_visual"] = pv.test_accuracy;
  j["probe_train_acc"] = 0.5 * (pa.train_accuracy + pv.train_accuracy);
  j["shuffled_probe_acc"] = chance;
  j["classifier_agreement"] = agreement;
  j["purity"] = cm.purity;
  j["nmi"] = cm.nmi;
  j["faulty_neg_rate"] = opt(diag.faulty_negative_rate);
  j["within_bucket_cosine"] = diag.within_bucket_cosine;
  j["cross_bucket_cosine"] = diag.cross_bucket_cosine;
  j["occupancy_a"] = diag.occupancy_a;
  j["occupancy_v"] = diag.occupancy_v;
  const std::string record = j.dump();

  if (!o.record.empty()) open_out(o.record, std::ios::app) << record << '\n';
  if (!o.embeddings.empty()) {
    auto f = open_out(o.embeddings);
    f << "# index\tclass\tvisual[" << qv[0].size() << "]\taudio[" << qa[0].size() << "]\n";
    f << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
      f << i << '\t' << data.classes[i];
      for (double x : qv[i]) f << '\t' << x;
      for (double x : qa[i]) f << '\t' << x;
      f << '\n';
    }
  }
  if (summary) {
    *summary << std::fixed << std::setprecision(4) << "epoch " << state.epoch << "  probe " << probe
             << " (audio " << pa.test_accuracy << ", visual " << pv.test_accuracy
             << ", shuffled-label baseline " << chance << ")\n"
             << "agreement " << agreement << "  purity " << cm.purity << "  nmi " << cm.nmi << '\n'
             << "within-bucket cosine " << diag.within_bucket_cosine << "  cross-bucket cosine "
             << diag.cross_bucket_cosine;
    if (diag.faulty_negative_rate) *summary << "  faulty-negative rate " << *diag.faulty_negative_rate;
    *summary << '\n' << std::defaultfloat;
  }
  return record;
}

const std::vector<std::string>& sweep_keys() {
  static const std::vector<std::string> keys{"K", "C", "mining", "hard_mining", "library_mode"};
  return keys;
}

std::string canonical_sweep_key(const std::string& key) {
  std::string k = key;
  std::replace(k.begin(), k.end(), '-', '_');
  const auto& keys = sweep_keys();
  if (std::find(keys.begin(), keys.end(), k) == keys.end())
    fail(ErrorCode::InvalidSweepKey, "cannot sweep '" + key + "' (use K, C, mining, hard-mining or library-mode)");
  return k;
}

fs::path sweep_run_dir(const fs::path& root, const std::string& key, const std::string& value,
                       std::uint64_t seed) {
  return root / (key + "=" + value) / ("seed-" + std::to_string(seed));
}

std::vector<SweepRow> consolidate(const fs::path& root, const std::string& key,
                                  const std::vector<std::string>& values,
                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    SweepRow row;
    row.value = v;
    if (fs::exists(root / (key + "=" + v) / "invalid.txt")) {
      row.status = "invalid";
      row.mean_probe = row.std_probe = row.faulty_neg_rate = NAN;
      rows.push_back(row);
      continue;
    }
    std::vector<double> probes;
    double fnr = 0.0;
    for (auto s : seeds) {
      const auto dir = sweep_run_dir(root, key, v, s);
      probes.push_back(json::parse(last_line(dir / "eval.jsonl")).at("probe_acc").get<double>());
      const auto m = json::parse(last_line(dir / "metrics.jsonl"));
      fnr += m.at("faulty_neg_rate").is_null() ? NAN : m.at("faulty_neg_rate").get<double>();
    }
    row.runs = probes.size();
    double sum = 0.0;
    for (double p : probes) sum += p;
    row.mean_probe = sum / static_cast<double>(probes.size());
    double ss = 0.0;
    for (double p : probes) ss += (p - row.mean_probe) * (p - row.mean_probe);
    row.std_probe = probes.size() > 1 ? std::sqrt(ss / static_cast<double>(probes.size() - 1)) : 0.0;
    row.faulty_neg_rate = fnr / static_cast<double>(probes.size());
    row.status = "ok";
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_table(std::ostream& out, const std::string& key, const std::vector<SweepRow>& rows) {
  out << key << "\tmean_probe_acc\tstd_probe_acc\tfaulty_neg_rate\truns\tstatus\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(std::isnan(x) ? "nan" : buf);
  };
  for (const auto& r : rows)
    out << r.value << '\t' << num(r.mean_probe) << '\t' << num(r.std_probe) << '\t'
        << num(r.faulty_neg_rate) << '\t' << r.runs << '\t' << r.status << '\n';
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual contrastive pre-training with semantic libraries"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "train one model and write its artifacts");
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--seed", seed, "root seed (overrides the config)");
  train_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "no progress lines");
  train_cmd->allow_extras();
  train_cmd->footer("Any config key can be overridden with --key=value.");

  EvalOptions eo;
  std::string record, embeddings;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eo.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", eo.dataset, "dataset file")->required();
  eval_cmd->add_option("--seed", eo.seed, "probe seed (default: the run seed)");
  eval_cmd->add_option("--out", record, "evaluation record file (default: eval.jsonl beside the checkpoint)");
  eval_cmd->add_option("--embeddings", embeddings, "write an embedding dump here");

  std::string sweep_key, sweep_values;
  std::size_t sweep_seeds = 3;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over a list of values");
  sweep_cmd->add_option("key", sweep_key, "K, C, mining, hard-mining or library-mode")->required();
  sweep_cmd->add_option("values", sweep_values, "comma-separated values")->required();
  sweep_cmd->add_option("--config", config_path, "key=value config file");
  sweep_cmd->add_option("--seed", seed, "first seed (overrides the config)");
  sweep_cmd->add_option("--seeds", sweep_seeds, "number of seeds per value")->capture_default_str();
  sweep_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  sweep_cmd->add_flag("--quiet", quiet, "no progress lines");
  sweep_cmd->allow_extras();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, d;
    const int code = app.exit(e, o, d);
    out << o.str();
    err << d.str();
    return code;
  }

  try {
    if (*train_cmd) {
      const auto cfg = resolve_config(config_path, train_cmd->remaining(), seed);
      RunPaths paths(out_dir);
      auto r = train_run(cfg, paths, quiet ? nullptr : &out);
      if (!quiet) out << "wrote " << paths.dir.string() << " (" << r.history.size() << " epochs)\n";
      return 0;
    }
    if (*eval_cmd) {
      eo.record = record.empty() ? eo.checkpoint.parent_path() / "eval.jsonl" : fs::path(record);
      eo.embeddings = embeddings;
      eval_run(eo, &out);
      return 0;
    }
    if (*sweep_cmd) {
      const std::string key = canonical_sweep_key(sweep_key);
      const auto values = split_list(sweep_values);
      if (values.empty()) fail(ErrorCode::InvalidConfig, "sweep: empty value list");
      const auto base = resolve_config(config_path, sweep_cmd->remaining(), seed);
      std::vector<std::uint64_t> seeds;
      for (std::size_t s = 0; s < sweep_seeds; ++s) seeds.push_back(base.seed + s);
      const fs::path root(out_dir);
      for (const auto& v : values) {
        TrainConfig cfg = base;
        const fs::path vdir = root / (key + "=" + v);
        fs::remove(vdir / "invalid.txt");
        try {
          set_value(cfg, key, v);
          cfg.validate();
        } catch (const Error& e) {
          err << "sweep: " << key << "=" << v << " skipped: " << e.what() << '\n';
          open_out(vdir / "invalid.txt") << e.what() << '\n';
          continue;
        }
        for (auto s : seeds) {
          cfg.seed = s;
          RunPaths paths(sweep_run_dir(root, key, v, s));
          if (!quiet) out << key << "=" << v << " seed " << s << '\n';
          train_run(cfg, paths, nullptr);
          fs::remove(paths.dir / "eval.jsonl");
          eval_run(EvalOptions{paths.checkpoint, paths.dataset, std::nullopt, paths.dir / "eval.jsonl", {}},
                   nullptr);
        }
      }
      const auto rows = consolidate(root, key, values, seeds);
      auto table = open_out(root / "sweep.tsv");
      write_sweep_table(table, key, rows);
      write_sweep_table(out, key, rows);
      return 0;
    }
  } catch (const Error& e) {
    err << "avid: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "avid: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace avid::cli
