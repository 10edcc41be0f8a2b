#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "../test_util.hpp"
#include "dnoc/commands.hpp"

using namespace dnoc;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr double kBaselineSeconds = 60.0;
constexpr double kAblationSeconds = 600.0;
constexpr double kSweepSeconds = 300.0;
constexpr double kMinAblationGap = 0.10;
constexpr double kOracleTolerance = 1e-9;
constexpr int kPropertyTrials = 1000;

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int failures = 0;
std::map<int, std::string> lines;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  lines[id] = "criterion " + std::to_string(id) + " " + (pass ? "PASS" : "FAIL") + " " + name + ": " + detail;
  std::cerr << lines[id] << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  Stopwatch sw;
  const auto v = testing::tiny_vocab();  // N_t = 9
  const auto pd = intersect_detectable(v, testing::tiny_classes());
  const auto batch = testing::tiny_batch(v, 6, 6, 31);  // sequences of length 4
  double worst = 0.0;
  std::size_t groups = 0;
  for (auto addressing : {Addressing::softmax, Addressing::raw_logit}) {
    const ModelDims dims{v.size(), 5, 6, 6, 6};
    const auto model = Model::random(dims, {addressing, true, false}, 17, 0.5);
    TrainOptions opts;
    opts.n_det = 2;
    const auto checks = check_gradients(batch, model, v, pd, opts);
    groups = std::max(groups, checks.size());
    for (const auto& c : checks) worst = std::max(worst, c.max_rel_error);
  }
  const double t = sw.seconds();
  report(1, "gradient correctness", worst < kGradTolerance && groups == 9 && t < kGradSeconds,
         std::to_string(groups) + " groups, max relative error " + fmt("%.3g", worst) + " (< 1e-4), " +
             fmt("%.2f", t) + " s (< 10 s)");
}

void memory_oracle() {
  double worst = 0.0;
  long reads = 0;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> numerator(-4, 4);
  const std::vector<double> grid = {-1.0, -1.0 / 3.0, 0.0, 0.5, 2.0};
  for (int n = 1; n <= 3; ++n) {
    for (int classes = 1; classes <= 4; ++classes) {
      int assignments = 1;
      for (int i = 0; i < n; ++i) assignments *= classes;
      for (int code = 0; code < assignments; ++code) {
        std::vector<int> labels(n);
        for (int i = 0, c = code; i < n; ++i, c /= classes) labels[i] = c % classes;
        for (int key_set = 0; key_set < 10; ++key_set) {
          KeyValueObjectMemory<double> mem(n, classes);
          std::vector<std::vector<double>> keys(n, std::vector<double>(2));
          for (int i = 0; i < n; ++i) {
            for (auto& k : keys[i]) k = numerator(rng) / 4.0;
            VectorXd f(2);
            f << keys[i][0], keys[i][1];
            mem.write({f, labels[i], 0.5});
          }
          for (double q0 : grid) {
            for (double q1 : grid) {
              VectorXd q(2);
              q << q0, q1;
              const auto r = memory_read(q, mem);
              // Brute-force softmax mixture.
              std::vector<double> e(n);
              double z = 0.0;
              for (int i = 0; i < n; ++i) {
                e[i] = std::exp(keys[i][0] * q0 + keys[i][1] * q1);
                z += e[i];
              }
              for (int c = 0; c < classes; ++c) {
                double p = 0.0;
                for (int i = 0; i < n; ++i)
                  if (labels[i] == c) p += e[i] / z;
                worst = std::max(worst, std::abs(p - r.distribution(c)));
              }
              for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(e[i] / z - r.weights(i)));
              ++reads;
            }
          }
        }
      }
    }
  }
  report(6, "memory addressing oracle", worst < kOracleTolerance,
         std::to_string(reads) + " reads over n <= 3 slots and N_D <= 4 classes, max deviation " +
             fmt("%.3g", worst) + " (< 1e-9)");
}

void rewrite_properties() {
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back("w" + std::to_string(i));
  const auto v = Vocabulary::build({words}, 1);
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> len(0, 25), pick(0, v.size() - 1), coin(0, 1);
  int idempotent = 0, masked = 0, lengths = 0;
  for (int trial = 0; trial < kPropertyTrials; ++trial) {
    std::vector<std::string> classes;
    for (const auto& w : words)
      if (coin(rng)) classes.push_back(w);
    classes.push_back("novel" + std::to_string(trial));
    const auto pd = intersect_detectable(v, classes);
    TokenSequence s(len(rng));
    for (auto& id : s) id = pick(rng);
    const auto r = rewrite_targets(s, pd);
    const auto a = mask_weights(s, pd);
    idempotent += rewrite_targets(r, pd) == r;
    lengths += r.size() == s.size() && a.size() == s.size();
    bool same = a.size() == s.size();
    for (std::size_t i = 0; same && i < s.size(); ++i) {
      const bool placeholder_here = r[i] == v.placeholder() && s[i] != v.placeholder();
      same = (a[i] == 1) == placeholder_here && (a[i] == 1 || r[i] == s[i]);
    }
    masked += same;
  }
  const bool pass = idempotent == kPropertyTrials && masked == kPropertyTrials && lengths == kPropertyTrials;
  report(7, "rewrite/mask properties", pass,
         std::to_string(kPropertyTrials) + " sentences: idempotent " + std::to_string(idempotent) +
             ", mask positions " + std::to_string(masked) + ", lengths " + std::to_string(lengths));
}

// ---------------------------------------------------------------------------

struct Benchmark {
  fs::path work;
  RunConfig base;
  double min_dnoc_f1 = 0.0;
};

Benchmark load_benchmark() {
  const auto kv = KeyValueFile::load(DNOC_BENCHMARK_CFG);
  Benchmark b;
  b.work = DNOC_ACCEPTANCE_DIR;
  b.min_dnoc_f1 = kv.get_double("min_dnoc_f1", 0.0);
  b.base.seed = static_cast<std::uint64_t>(kv.get_int("seed", 7));
  for (const auto& [k, val] : kv.with_prefix("run.")) b.base.set(k, val);
  return b;
}

RunConfig run_config(const Benchmark& b, const std::string& data, const std::string& ckpt, const std::string& mode) {
  RunConfig c = b.base;
  c.data_dir = (b.work / data).string();
  c.checkpoint = (b.work / ckpt).string();
  c.mode = mode;
  return c;
}

void generate(const Benchmark& b, const std::string& dir) {
  GenDataOptions g;
  g.out_dir = (b.work / dir).string();
  g.seed = b.base.seed;
  std::ostringstream sink;
  cmd_gen_data(g, sink);
}

F1Report train_and_eval(const Benchmark& b, const std::string& data, const std::string& tag, std::ostream& log) {
  auto cfg = run_config(b, data, tag + ".ckpt", "dnoc");
  cfg.train_log = (b.work / (tag + "_train.log")).string();
  cmd_train(cfg, log);
  cfg.report = (b.work / (tag + "_report.json")).string();
  return cmd_eval(cfg, log);
}

void benchmark_criteria() {
  const Benchmark b = load_benchmark();
  fs::remove_all(b.work);
  fs::create_directories(b.work);
  std::ofstream log(b.work / "acceptance.log");

  generate(b, "data");

  Stopwatch ablation_clock;
  const F1Report dnoc = train_and_eval(b, "data", "dnoc", log);
  auto nomem_cfg = run_config(b, "data", "dnoc.ckpt", "no-memory");
  nomem_cfg.report = (b.work / "no_memory_report.json").string();
  const F1Report nomem = cmd_eval(nomem_cfg, log);
  const double ablation_seconds = ablation_clock.seconds();

  Stopwatch baseline_clock;
  auto plain_cfg = run_config(b, "data", "plain.ckpt", "no-placeholder");
  cmd_train(plain_cfg, log);
  plain_cfg.report = (b.work / "no_placeholder_report.json").string();
  const F1Report plain = cmd_eval(plain_cfg, log);
  const double baseline_seconds = baseline_clock.seconds();

  report(2, "structural zero", plain.average_f1 == 0.0 && baseline_seconds < kBaselineSeconds,
         "no-placeholder held-out average F1 " + fmt("%.6f", plain.average_f1) + " (== 0), " +
             fmt("%.1f", baseline_seconds) + " s (< 60 s)");

  const double gap = dnoc.average_f1 - nomem.average_f1;
  report(3, "ablation ordering",
         dnoc.average_f1 > nomem.average_f1 && nomem.average_f1 > 0.0 && gap >= kMinAblationGap &&
             ablation_seconds < kAblationSeconds,
         "DNOC " + fmt("%.4f", dnoc.average_f1) + " > no-memory " + fmt("%.4f", nomem.average_f1) +
             " > 0, gap " + fmt("%.4f", gap) + " (>= 0.10), " + fmt("%.1f", ablation_seconds) + " s (< 600 s)");

  report(4, "absolute synthetic performance", dnoc.average_f1 >= b.min_dnoc_f1,
         "DNOC held-out average F1 " + fmt("%.4f", dnoc.average_f1) + " (>= " + fmt("%.2f", b.min_dnoc_f1) +
             " from benchmark.cfg)");

  Stopwatch sweep_clock;
  std::vector<int> values;
  for (int n = 1; n <= 10; ++n) values.push_back(n);
  const auto sweep = cmd_sweep_ndet(run_config(b, "data", "dnoc.ckpt", "dnoc"), values, log);
  const double sweep_seconds = sweep_clock.seconds();
  double f1_1 = 0.0, f1_4 = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& [n, f1] : sweep) {
    if (n == 1) f1_1 = f1;
    if (n == 4) f1_4 = f1;
    if (n >= 2) {
      lo = std::min(lo, f1);
      hi = std::max(hi, f1);
    }
  }
  const double drop = f1_4 - f1_1;
  report(5, "N_det sweep shape", drop > hi - lo && sweep_seconds < kSweepSeconds,
         "F1(1) " + fmt("%.4f", f1_1) + ", F1(4) " + fmt("%.4f", f1_4) + ", drop " + fmt("%.4f", drop) +
             " > variation over [2,10] " + fmt("%.4f", hi - lo) + ", " + fmt("%.1f", sweep_seconds) +
             " s (< 300 s)");

  report(8, "known-object direction", dnoc.known_average_f1 >= plain.known_average_f1,
         "DNOC known average F1 " + fmt("%.4f", dnoc.known_average_f1) + " >= no-placeholder " +
             fmt("%.4f", plain.known_average_f1));

  generate(b, "data_repeat");
  train_and_eval(b, "data_repeat", "repeat", log);
  const std::string first = read_file(b.work / "dnoc_report.json");
  const std::string second = read_file(b.work / "repeat_report.json");
  report(9, "determinism", !first.empty() && first == second,
         "two train+eval runs: reports of " + std::to_string(first.size()) + " and " +
             std::to_string(second.size()) + " bytes are " + (first == second ? "identical" : "different"));
}

}  // namespace

int main() {
  try {
    gradient_correctness();
    benchmark_criteria();
    memory_oracle();
    rewrite_properties();
  } catch (const std::exception& e) {
    for (const auto& [id, line] : lines) std::cout << line << '\n';
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  for (const auto& [id, line] : lines) std::cout << line << '\n';
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
