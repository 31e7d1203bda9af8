// Acceptance suite: one PASS/FAIL line per criterion, plus a few supporting
// checks. Run with criterion numbers as arguments to select a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "avid/checkpoint.hpp"
#include "avid/eval.hpp"
#include "avid/loss.hpp"
#include "avid/model.hpp"
#include "avid/semlib.hpp"
#include "avid/trainer.hpp"
#include "cli.hpp"

using namespace avid;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::FILE* report_file = nullptr;  // --report FILE: the verdict lines only

void report(const std::string& label, bool ok, const std::string& detail) {
  std::printf("%-13s %s  %s\n", label.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (report_file) {
    std::fprintf(report_file, "%-13s %s  %s\n", label.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(report_file);
  }
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vector gaussian(Rng& rng, std::size_t n, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  Vector v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Vector unit(Rng& rng, std::size_t n) { return l2_normalize(gaussian(rng, n)); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// 1. gradients through head normalization and the MLP

void criterion_1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int configs = 0;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    Rng rng(1000 + seed);
    std::uniform_int_distribution<std::size_t> dim(3, 10);
    const EncoderShape sa{dim(rng), 12 + dim(rng), dim(rng) % 6 + 2};
    const EncoderShape sv{dim(rng), sa.hidden_dim, sa.embed_dim};
    auto ea = ModalityEncoder::create(sa, rng);
    auto ev = ModalityEncoder::create(sv, rng);
    const auto xa = gaussian(rng, sa.input_dim), xv = gaussian(rng, sv.input_dim);
    const auto ka = unit(rng, sa.embed_dim), kv = unit(rng, sa.embed_dim);
    std::vector<Vector> na, nv;
    for (std::uint64_t j = 0; j < 1 + seed % 8; ++j) {
      na.push_back(unit(rng, sa.embed_dim));
      nv.push_back(unit(rng, sa.embed_dim));
    }
    const std::vector<ConstSpan> va(na.begin(), na.end()), vv(nv.begin(), nv.end());
    const double tau = 0.07 + 0.05 * static_cast<double>(seed % 5);
    const double w = 0.5 + 0.25 * static_cast<double>(seed % 4);

    // Single NCE term through the visual encoder.
    ParamObjective nce = [&](const MlpParams& p, MlpParams* grad) {
      ModalityEncoder e{p, p};
      auto q = encode_query(e, xv);
      auto r = nce_loss(q.q, ka, va, tau);
      if (grad) {
        *grad = p.zeros_like();
        accumulate_query_gradient(e, q, r.grad_q, *grad);
      }
      return r.loss;
    };
    worst = std::max(worst, finite_diff_check(nce, ev.query).max_relative_error);

    // Weighted bidirectional objective, differentiated with respect to each encoder.
    auto objective = [&](bool wrt_visual) -> ParamObjective {
      return [&, wrt_visual](const MlpParams& p, MlpParams* grad) {
        ModalityEncoder e_v{wrt_visual ? p : ev.query, ev.key};
        ModalityEncoder e_a{wrt_visual ? ea.query : p, ea.key};
        auto qv = encode_query(e_v, xv);
        auto qa = encode_query(e_a, xa);
        auto r = avid_loss(qv.q, qa.q, kv, ka, va, vv, tau, w);
        if (grad) {
          *grad = p.zeros_like();
          if (wrt_visual) accumulate_query_gradient(e_v, qv, r.grad_qv, *grad);
          else accumulate_query_gradient(e_a, qa, r.grad_qa, *grad);
        }
        return r.loss;
      };
    };
    worst = std::max(worst, finite_diff_check(objective(true), ev.query).max_relative_error);
    worst = std::max(worst, finite_diff_check(objective(false), ea.query).max_relative_error);
    ++configs;
  }
  const double secs = seconds_since(t0);
  report("criterion 1", worst <= 1e-4 && configs >= 20 && secs < 10.0,
         fmt("max relative FD error %.2e over %d configurations (3 objectives each) in %.2f s; "
             "limits 1e-4, >= 20, < 10 s",
             worst, configs, secs));
}

// ---------------------------------------------------------------------------
// 2. NCE against enumeration

void criterion_2() {
  Rng rng(2);
  std::uniform_int_distribution<int> count(0, 8);
  std::uniform_int_distribution<std::size_t> dims(2, 12);
  std::uniform_real_distribution<double> taus(0.03, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = dims(rng);
    const auto q = gaussian(rng, d), k = gaussian(rng, d);
    std::vector<Vector> negs;
    const int n = count(rng);
    for (int j = 0; j < n; ++j) negs.push_back(gaussian(rng, d));
    const double tau = taus(rng);
    auto cos = [](const Vector& a, const Vector& b) {
      long double ab = 0, aa = 0, bb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<long double>(a[i]) * b[i];
        aa += static_cast<long double>(a[i]) * a[i];
        bb += static_cast<long double>(b[i]) * b[i];
      }
      return ab / std::sqrt(aa * bb);
    };
    long double den = std::exp(cos(q, k) / tau);
    const long double num = den;
    for (const auto& x : negs) den += std::exp(cos(q, x) / tau);
    const double oracle = static_cast<double>(-std::log(num / den));
    const std::vector<ConstSpan> views(negs.begin(), negs.end());
    worst = std::max(worst, std::abs(nce_loss(q, k, views, tau).loss - oracle));
  }
  report("criterion 2", worst <= 1e-10,
         fmt("max |nce - enumeration| %.2e over 1000 instances with <= 8 negatives; limit 1e-10", worst));
}

// ---------------------------------------------------------------------------
// 3. exclusion and capacity

void criterion_3() {
  Rng rng(3);
  std::uniform_int_distribution<int> pick(0, 1 << 30);
  std::size_t violations = 0, mined = 0, empty = 0;
  for (int call = 0; call < 10000; ++call) {
    const std::size_t C = 2 + static_cast<std::size_t>(pick(rng) % 9);
    const std::size_t cap = 1 + static_cast<std::size_t>(pick(rng) % 6);
    const auto mode = pick(rng) % 2 ? LibraryMode::Queue : LibraryMode::Momentum;
    SemanticLibrary lib(C, cap, 4, mode, 0.8);
    const int ops = pick(rng) % 40;
    for (int o = 0; o < ops; ++o)
      lib.update(pick(rng) % static_cast<int>(C), unit(rng, 4), pick(rng) % 12);
    const int label = pick(rng) % static_cast<int>(C);
    std::set<const double*> own;
    for (const auto& e : lib.bucket(static_cast<std::size_t>(label))) own.insert(e.embedding.data());
    try {
      auto negs = mine_contrastive_set(lib, label);
      ++mined;
      std::size_t expected = 0;
      for (std::size_t b = 0; b < C; ++b)
        if (b != static_cast<std::size_t>(label)) expected += lib.bucket(b).size();
      if (negs.size() != expected) ++violations;
      for (std::size_t j = 0; j < negs.size(); ++j)
        if (negs.buckets[j] == label || own.count(negs.keys[j].data())) ++violations;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyNegativePool) throw;
      ++empty;
    }
  }

  std::size_t cap_violations = 0, total_ops = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    const std::size_t C = 2 + static_cast<std::size_t>(pick(rng) % 9);
    const std::size_t cap = 1 + static_cast<std::size_t>(pick(rng) % 8);
    const auto mode = pick(rng) % 2 ? LibraryMode::Queue : LibraryMode::Momentum;
    SemanticLibrary lib(C, cap, 3, mode, 0.5);
    if (pick(rng) % 4 == 0) lib.fill_random(rng);
    const int ops = 1 + pick(rng) % 60;
    for (int o = 0; o < ops; ++o, ++total_ops) {
      lib.update(pick(rng) % static_cast<int>(C), unit(rng, 3), pick(rng) % 20);
      for (std::size_t b = 0; b < C; ++b)
        if (lib.bucket(b).size() > cap) ++cap_violations;
    }
  }
  report("criterion 3", violations == 0 && cap_violations == 0,
         fmt("%zu exclusion violations in 10000 mining calls (%zu mined, %zu empty pools); "
             "%zu capacity violations over 10000 op sequences (%zu ops)",
             violations, mined, empty, cap_violations, total_ops));
}

// ---------------------------------------------------------------------------
// 4. momentum closed form

void criterion_4() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(4000 + s);
    auto a = ModalityEncoder::create(EncoderShape{8, 16, 4}, rng);
    auto b = ModalityEncoder::create(EncoderShape{8, 16, 4}, rng);
    const MlpParams theta = a.query;
    MlpParams delta = b.query;
    auto gap = [&] {
      double g = 0.0;
      auto x = parameter_blocks(std::as_const(delta));
      auto y = parameter_blocks(theta);
      for (std::size_t k = 0; k < x.size(); ++k)
        for (std::size_t i = 0; i < x[k].size(); ++i) g += (x[k][i] - y[k][i]) * (x[k][i] - y[k][i]);
      return std::sqrt(g);
    };
    const double g0 = gap();
    for (int t = 0; t < 10; ++t) momentum_update(delta, theta, 0.9);
    worst = std::max(worst, std::abs(gap() - std::pow(0.9, 10) * g0));
  }
  report("criterion 4", worst <= 1e-9,
         fmt("max |gap_T - m^T gap_0| %.2e over 50 encoders, T = 10, m = 0.9; limit 1e-9", worst));
}

// ---------------------------------------------------------------------------
// Shared training runs for 5 through 8.

struct Run {
  std::vector<EpochMetrics> history;
  double probe = 0.0;
  double within = 0.0, cross = 0.0;
  std::string warmup_snapshot;  // checkpoint text at the end of warm-up
  double seconds = 0.0;
};

std::string history_bytes(const std::vector<EpochMetrics>& h, std::size_t upto) {
  std::string s;
  for (const auto& e : h)
    if (e.epoch <= upto) s += cli::metrics_record(e) + "\n";
  return s;
}

TrainConfig base_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  return c;
}

Run train_once(TrainConfig cfg) {
  cfg.probe_every = cfg.epochs;  // probe once, at the end
  const auto t0 = Clock::now();
  const auto data = generate(cfg.data_config());
  Run run;
  const std::size_t warm = cfg.warmup_epochs();
  auto result = train(cfg, data, [&](const EpochMetrics& m, const TrainState& s) {
    if (m.epoch == warm) {
      // Everything but the config echo, which names the hard-mining mode.
      TrainState copy = s;
      copy.config = base_config(cfg.seed);
      std::ostringstream ck;
      save_checkpoint(copy, ck);
      run.warmup_snapshot = ck.str();
    }
  });
  run.seconds = seconds_since(t0);
  run.history = std::move(result.history);
  run.probe = run.history.empty() ? NAN : run.history.back().probe_acc.value_or(NAN);
  const auto diag = mining_diagnostics(result.state, data.classes);
  run.within = diag.within_bucket_cosine;
  run.cross = diag.cross_bucket_cosine;
  std::printf("  run mining=%s K=%zu hard=%s seed=%llu: probe %.4f agreement %.3f (%.1f s)\n",
              std::string(to_string(cfg.mining)).c_str(), cfg.contrastive_size,
              std::string(to_string(cfg.hard_mining)).c_str(), static_cast<unsigned long long>(cfg.seed),
              run.probe, run.history.empty() ? NAN : run.history.back().classifier_agreement.value_or(NAN),
              run.seconds);
  std::fflush(stdout);
  return run;
}

std::map<std::string, std::vector<Run>> cache;

const std::vector<Run>& runs(const std::string& name, std::size_t seeds,
                             const std::function<void(TrainConfig&)>& tweak) {
  auto& v = cache[name];
  while (v.size() < seeds) {
    auto cfg = base_config(v.size());
    tweak(cfg);
    v.push_back(train_once(cfg));
  }
  return v;
}

const std::vector<Run>& acsm_runs(std::size_t seeds) {
  return runs("acsm", seeds, [](TrainConfig&) {});
}

// ---------------------------------------------------------------------------
// 5. faulty-negative reduction

const std::vector<Run>& random_runs(std::size_t seeds) {
  return runs("random", seeds, [](TrainConfig& c) { c.mining = MiningMode::Random; });
}

void criterion_5() {
  const auto& a = acsm_runs(5);
  const auto& r = random_runs(5);
  std::vector<double> acsm_rate, random_rate;
  std::size_t counted_epochs = 0;
  double secs = 0.0;
  bool reached = true;
  for (std::size_t s = 0; s < 5; ++s) {
    secs += a[s].seconds + r[s].seconds;
    std::size_t start = 0;
    for (const auto& e : a[s].history)
      if (e.classifier_agreement.value_or(0.0) > 0.2) {
        start = e.epoch;
        break;
      }
    if (start == 0) {
      reached = false;
      continue;
    }
    std::vector<double> fa, fr;
    for (const auto& e : a[s].history)
      if (e.epoch >= start) fa.push_back(e.faulty_neg_rate.value());
    for (const auto& e : r[s].history)
      if (e.epoch >= start) fr.push_back(e.faulty_neg_rate.value());
    acsm_rate.push_back(mean(fa));
    random_rate.push_back(mean(fr));
    counted_epochs += fa.size();
  }
  const double ma = reached ? mean(acsm_rate) : NAN, mr = reached ? mean(random_rate) : NAN;
  // Binomial spread, taking each library insertion (N pairs, two modalities,
  // every counted epoch) as one draw.
  const double n = 2.0 * 2000.0 * static_cast<double>(counted_epochs);
  const double sigma = std::sqrt(0.1 * 0.9 / n);
  const bool ok = reached && ma <= 0.5 * mr && std::abs(mr - 0.1) <= 3 * sigma && secs <= 600.0;
  report("criterion 5", ok,
         fmt("after agreement > 0.2: acsm faulty-negative rate %.4f vs random %.4f (ratio %.3f, limit 0.5); "
             "random - 1/C_true = %+.5f (3 sigma %.5f); 10 default runs took %.0f s (limit 600 s)",
             ma, mr, ma / mr, mr - 0.1, 3 * sigma, secs));
}

// ---------------------------------------------------------------------------
// 6. downstream improvement

void criterion_6() {
  const auto& a = acsm_runs(5);
  const auto& r = random_runs(5);
  std::vector<double> pa, pr;
  for (const auto& x : a) pa.push_back(x.probe);
  for (const auto& x : r) pr.push_back(x.probe);
  const double ma = mean(pa), mr = mean(pr);
  const bool ok = ma - mr >= 0.02 && ma >= 0.1 + 0.30 && mr >= 0.1 + 0.30;
  report("criterion 6", ok,
         fmt("5-seed probe acsm %.4f, random %.4f, gap %+.2f points (limit +2); chance 0.10", ma, mr,
             100 * (ma - mr)));

  // Supporting checks on the same runs.
  std::vector<double> agree100, within, cross, secs;
  for (const auto& x : a) {
    agree100.push_back(x.history.at(99).classifier_agreement.value());
    within.push_back(x.within);
    cross.push_back(x.cross);
    secs.push_back(x.seconds);
  }
  report("check", mean(agree100) > 0.7,
         fmt("classifier agreement after 100 epochs %.3f (5-seed mean, limit > 0.7)", mean(agree100)));
  report("check", mean(within) > mean(cross),
         fmt("trained acsm libraries: within-bucket cosine %.3f > cross-bucket %.3f", mean(within), mean(cross)));
  report("check", *std::max_element(secs.begin(), secs.end()) < 300.0,
         fmt("slowest 200-epoch default run %.1f s (limit 300 s)", *std::max_element(secs.begin(), secs.end())));
}

// ---------------------------------------------------------------------------
// 7. K sweep

void criterion_7() {
  const std::size_t ks[] = {126, 252, 504, 1008};
  std::vector<double> means;
  std::string detail;
  for (std::size_t k : ks) {
    const auto& v = k == 504 ? acsm_runs(3)
                             : runs("K" + std::to_string(k), 3, [k](TrainConfig& c) { c.contrastive_size = k; });
    std::vector<double> p;
    for (std::size_t s = 0; s < 3; ++s) p.push_back(v[s].probe);
    means.push_back(mean(p));
    detail += fmt("K=%zu %.4f  ", k, means.back());
  }
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < means.size(); ++i) worst_drop = std::max(worst_drop, means[i - 1] - means[i]);
  report("criterion 7", worst_drop <= 0.01,
         detail + fmt("largest drop on doubling %.2f points (limit 1)", 100 * worst_drop));
}

// ---------------------------------------------------------------------------
// 8. hard-sample mining

void criterion_8() {
  const auto& a = acsm_runs(5);
  const auto& h = runs("hard", 5, [](TrainConfig& c) { c.hard_mining = HardMining::Ambiguity; });
  std::vector<double> pa, ph;
  bool identical = true;
  const std::size_t warm = base_config(0).warmup_epochs();
  for (std::size_t s = 0; s < 5; ++s) {
    pa.push_back(a[s].probe);
    ph.push_back(h[s].probe);
    identical = identical && history_bytes(a[s].history, warm) == history_bytes(h[s].history, warm) &&
                !a[s].warmup_snapshot.empty() && a[s].warmup_snapshot == h[s].warmup_snapshot;
  }
  const double ma = mean(pa), mh = mean(ph);
  report("criterion 8", mh >= ma - 0.005 && identical,
         fmt("5-seed probe with ambiguity weighting %.4f vs without %.4f (margin -0.5 points); "
             "metrics and state through epoch %zu %s",
             mh, ma, warm, identical ? "bit-identical" : "DIFFER"));
}

// ---------------------------------------------------------------------------
// 9. determinism of the command-line artifacts

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_9(Clock::time_point suite_start) {
  const fs::path root = fs::temp_directory_path() / "avid_acceptance_9";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "run.cfg") << "epochs=20\nprobe_every=10\nseed=3\n";
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  const std::string cfg = (root / "run.cfg").string();

  int rc = 0;
  for (auto d : {"t1", "t2"}) rc |= run({"train", "--quiet", "--config", cfg, "--out-dir", (root / d).string()});
  const bool train_same = slurp(root / "t1" / "metrics.jsonl") == slurp(root / "t2" / "metrics.jsonl") &&
                          slurp(root / "t1" / "checkpoint.txt") == slurp(root / "t2" / "checkpoint.txt");

  for (auto out : {"e1.jsonl", "e2.jsonl"})
    rc |= run({"eval", "--checkpoint", (root / "t1" / "checkpoint.txt").string(), "--dataset",
               (root / "t1" / "dataset.tsv").string(), "--out", (root / out).string()});
  const bool eval_same = slurp(root / "e1.jsonl") == slurp(root / "e2.jsonl");

  for (auto d : {"s1", "s2"})
    rc |= run({"sweep", "K", "126,252", "--quiet", "--seeds", "2", "--config", cfg, "--epochs=10", "--out-dir",
               (root / d).string()});
  bool sweep_same = slurp(root / "s1" / "sweep.tsv") == slurp(root / "s2" / "sweep.tsv");
  for (auto k : {"126", "252"})
    for (auto s : {"seed-3", "seed-4"}) {
      const auto rel = fs::path(std::string("K=") + k) / s;
      for (auto f : {"metrics.jsonl", "eval.jsonl", "checkpoint.txt"})
        sweep_same = sweep_same && slurp(root / "s1" / rel / f) == slurp(root / "s2" / rel / f);
    }
  fs::remove_all(root);
  const double total = seconds_since(suite_start);
  report("criterion 9", rc == 0 && train_same && eval_same && sweep_same && total <= 2700.0,
         fmt("byte-identical reruns: train %s, eval %s, sweep %s; suite time so far %.0f s (limit 2700 s)",
             train_same ? "yes" : "no", eval_same ? "yes" : "no", sweep_same ? "yes" : "no", total));
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = Clock::now();
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--report" && i + 1 < argc) {
      report_file = std::fopen(argv[++i], "w");
      if (!report_file) {
        std::printf("cannot write %s\n", argv[i]);
        return 2;
      }
    } else {
      pick.insert(std::atoi(argv[i]));
    }
  }
  auto want = [&](int c) { return pick.empty() || pick.count(c); };
  try {
    if (want(1)) criterion_1();
    if (want(2)) criterion_2();
    if (want(3)) criterion_3();
    if (want(4)) criterion_4();
    if (want(5)) criterion_5();
    if (want(6)) criterion_6();
    if (want(7)) criterion_7();
    if (want(8)) criterion_8();
    if (want(9)) criterion_9(start);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d failing line(s), %.0f s total\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
