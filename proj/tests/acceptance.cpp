// Acceptance gate: one pass/fail line per criterion, exit code = failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ssrtb/errors.hpp"
#include "ssrtb/harness.hpp"

using namespace ssrtb;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

void report(int index, const char* name, bool pass, const std::string& detail) {
    std::printf("CRITERION %d %-28s %s  (%s)\n", index, name, pass ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// Convergence-shape checks collected from every acceptance training run.
struct ShapeCheck {
    std::string tag;
    ConvergenceSummary summary;
};
std::vector<ShapeCheck> g_shapes;

void collect_shape(const std::string& tag, const TrainLog& log) {
    g_shapes.push_back({tag, emit_convergence(log, "acceptance_out/convergence", tag)});
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
    double t0 = now_s();
    QNetwork net({kFeatureDim, 4, 3, 100});
    Rng rng(2024);
    net.init_weights(rng);
    for (auto& layer : net.layers)
        for (Eigen::Index i = 0; i < layer.b.size(); ++i)
            layer.b[i] = rng.uniform(-0.1, 0.1);

    std::vector<Transition> batch(20);
    std::vector<double> targets;
    for (auto& t : batch) {
        for (int k = 0; k < kFeatureDim; ++k) t.s.g[k] = rng.uniform(-1.0, 1.0);
        t.a = rng.uniform_int(0, 99);
        targets.push_back(rng.uniform(-1.0, 1.0));
    }
    GradientResult g = compute_gradients(net, batch, targets);

    const double h = 1e-6;
    double max_rel = 0.0;
    auto probe = [&](double& p, double analytic) {
        double orig = p;
        p = orig + h;
        double up = batch_loss(net, batch, targets);
        p = orig - h;
        double dn = batch_loss(net, batch, targets);
        p = orig;
        double numeric = (up - dn) / (2.0 * h);
        double rel = std::abs(numeric - analytic) /
                     std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        max_rel = std::max(max_rel, rel);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
                probe(layer.W(i, j), g.grads[l].W(i, j));
        for (Eigen::Index i = 0; i < layer.b.size(); ++i)
            probe(layer.b[i], g.grads[l].b[i]);
    }
    double dt = now_s() - t0;
    report(1, "gradient check", max_rel < 1e-4 && dt < 10.0,
           fmt("max rel err %.2e, %.1fs", max_rel, dt));
}

// ---------------------------------------------------------------- criterion 2

// Two-state, two-action deterministic chain, horizon 3, gamma 1.
//   s0: a0 -> stay s0, r 0.10;  a1 -> go s1, r 0.00
//   s1: a0 -> go s0,   r 0.20;  a1 -> stay s1, r 1.00
struct ChainEnv : Env {
    static constexpr int kHorizon = 3;
    int start = 0;
    int state = 0;
    int t = 0;

    static MdpState encode(int s, int t) {
        MdpState m;
        m.step = t + 1;
        m.g[0] = s == 0 ? 1.0 : 0.0;
        m.g[1] = s == 1 ? 1.0 : 0.0;
        m.g[2] = static_cast<double>(t) / kHorizon;
        return m;
    }

    MdpState reset() override {
        state = start;
        t = 0;
        return encode(state, t);
    }
    StepResult step(int action) override {
        StepResult r;
        if (state == 0) {
            r.reward = action == 0 ? 0.10 : 0.0;
            state = action == 0 ? 0 : 1;
        } else {
            r.reward = action == 0 ? 0.20 : 1.00;
            state = action == 0 ? 0 : 1;
        }
        ++t;
        r.done = t == kHorizon;
        r.next = encode(state, t);
        r.next.terminal = r.done;
        return r;
    }
    int action_count() const override { return 2; }
};

void criterion_toy_mdp() {
    double t0 = now_s();
    // Exact finite-horizon values by backward induction.
    const double R[2][2] = {{0.10, 0.0}, {0.20, 1.00}};
    const int NXT[2][2] = {{0, 1}, {0, 1}};
    double V[ChainEnv::kHorizon + 1][2] = {};
    double Q[ChainEnv::kHorizon][2][2];
    for (int t = ChainEnv::kHorizon - 1; t >= 0; --t)
        for (int s = 0; s < 2; ++s) {
            for (int a = 0; a < 2; ++a) Q[t][s][a] = R[s][a] + V[t + 1][NXT[s][a]];
            V[t][s] = std::max(Q[t][s][0], Q[t][s][1]);
        }

    TrainerConfig cfg;
    cfg.layer_sizes = {kFeatureDim, 32, 16, 2};
    cfg.action_count = 2;
    cfg.batch_size = 32;
    cfg.memory_capacity = 4096;
    cfg.episodes = 6000;
    cfg.steps_per_episode_hint = ChainEnv::kHorizon;
    cfg.target_sync_period = 200;
    cfg.learning_rate = 1e-3;
    // Off-policy value recovery: act fully at random so every (state, step)
    // cell stays covered; the backup operator still drives Q to Q*.
    cfg.epsilon_end = 1.0;
    DqnTrainer trainer(cfg, 99);
    TrainResult res = trainer.train([](int ep) {
        auto env = std::make_unique<ChainEnv>();
        env->start = ep % 2; // both states appear as episode starts
        return env;
    });

    double max_err = 0.0;
    bool greedy_optimal = true;
    for (int t = 0; t < ChainEnv::kHorizon; ++t)
        for (int s = 0; s < 2; ++s) {
            auto q = res.net.q_values(ChainEnv::encode(s, t));
            for (int a = 0; a < 2; ++a)
                max_err = std::max(max_err, std::abs(q[a] - Q[t][s][a]));
            int greedy = q[1] > q[0] ? 1 : 0;
            int optimal = Q[t][s][1] > Q[t][s][0] ? 1 : 0;
            if (greedy != optimal) greedy_optimal = false;
        }
    double dt = now_s() - t0;
    report(2, "toy mdp value recovery", max_err < 1e-2 && greedy_optimal && dt < 60.0,
           fmt("max |Q - Q*| %.4f, greedy %s, %.1fs", max_err,
               greedy_optimal ? "optimal" : "suboptimal", dt));
}

// ---------------------------------------------------------------- criterion 3

const char* kConsistencyConfig = R"({
  "seed": 314159,
  "auctions_per_day": 1000,
  "ads": [
    {
      "id": "anchor",
      "daily_budget": 100.0,
      "keywords": [{"keyword": "kw", "bidprice": 1.0}]
    }
  ],
  "consistency": {"pairs": 20, "auctions_per_day": 140000}
})";

void criterion_consistency() {
    double t0 = now_s();
    Lab lab{parse_config(kConsistencyConfig)};
    ConsistencySummary s = lab.consistency("acceptance_out/consistency");
    double dt = now_s() - t0;
    bool pass = s.pairs >= 20 && s.pass_fraction >= 0.90 &&
                s.eta_bound_at_003 <= 0.01 && s.chain_ok && dt < 300.0;
    report(3, "cross-day consistency", pass,
           fmt("%d pairs, pass fraction %.3f, max eta %.4f, bound(0.03)=%.5f, %.0fs",
               s.pairs, s.pass_fraction, s.max_eta, s.eta_bound_at_003, dt));
}

// ------------------------------------------------------- criteria 4, 5 and 7

const char* kSingleAgentConfig = R"({
  "seed": 271828,
  "auctions_per_day": 3000,
  "test_days": 5,
  "amdp_block_size": 25,
  "trainer": {"episodes": 600, "batch_size": 64, "target_sync_period": 200},
  "ads": [
    {"id": "adA", "daily_budget": 60.0,
     "keywords": [{"keyword": "shoes", "bidprice": 0.8},
                  {"keyword": "boots", "bidprice": 1.0}],
     "market": {"pcvr_beta_a": 6.0, "pcvr_beta_b": 14.0, "ctr_base": 0.35,
                "purchase_amount_mean": 10.0}},
    {"id": "adB", "daily_budget": 60.0,
     "keywords": [{"keyword": "coats", "bidprice": 0.9},
                  {"keyword": "hats", "bidprice": 0.7}],
     "market": {"pcvr_beta_a": 5.0, "pcvr_beta_b": 20.0, "ctr_base": 0.30,
                "purchase_amount_mean": 15.0}},
    {"id": "adC", "daily_budget": 60.0,
     "keywords": [{"keyword": "bags", "bidprice": 1.1}],
     "market": {"pcvr_beta_a": 8.0, "pcvr_beta_b": 12.0, "ctr_base": 0.25,
                "purchase_amount_mean": 12.0}}
  ]
})";

struct AlgoMeans {
    double rmdp_train = 0.0, rmdp_test = 0.0;
    double amdp_train = 0.0, amdp_test = 0.0;
    bool rmdp_test_cost_ok = true;
    std::vector<EvalRow> rows;
};

struct Pooled {
    double cost = 0.0;
    double pur = 0.0;
    double ratio() const { return cost > 0.0 ? pur / cost : 0.0; }
};

// Improvement of the day-pooled pur/cost ratio over the pooled KB ratio,
// averaged across ads. Pooling first removes the small-sample noise that a
// mean of single-day ratios would carry.
double pooled_improvement(const std::map<std::string, Pooled>& algo_by_ad,
                          const std::map<std::string, Pooled>& kb_by_ad) {
    double sum = 0.0;
    long n = 0;
    for (const auto& [ad_id, p] : algo_by_ad) {
        double kb = kb_by_ad.at(ad_id).ratio();
        sum += kb > 0.0 ? (p.ratio() - kb) / kb : 0.0;
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

AlgoMeans run_single_agent_protocol() {
    Lab lab{parse_config(kSingleAgentConfig)};
    const ExperimentConfig& cfg = lab.config();
    const AuctionLog& train_log = lab.train_day();
    std::vector<AuctionLog> test_logs;
    for (int d = 0; d < cfg.test_days; ++d) test_logs.push_back(lab.test_day(d));

    AlgoMeans out;
    // (algo, split) -> ad -> day-pooled totals
    std::map<std::pair<std::string, std::string>, std::map<std::string, Pooled>> pools;
    for (const auto& ac : cfg.ads) {
        const AdDerived& ad = lab.derived(ac.ad.id);
        double c = lab.kb_cost_on(train_log, ad, 1000);
        TrainResult rmdp = lab.train_rmdp_ad(ad, c);
        collect_shape("rmdp_" + ad.ad.id, rmdp.log);
        TrainResult amdp = lab.train_amdp_ad(ad, c);
        collect_shape("amdp_" + ad.ad.id, amdp.log);

        FeatureNorms norms = ad.norms;
        norms.budget = c;
        double price_ref = lab.amdp_price_ref(ad);
        int block = cfg.amdp_block_size;

        auto eval_on = [&](const AuctionLog& log, const std::string& split,
                           std::uint64_t tag) {
            KbPolicy kb(ad.presets);
            EvalRow k = lab.eval_policy_on_day("kb", split, ad, kb, log, tag);
            out.rows.push_back(k);
            auto& kp = pools[{"kb", split}][ad.ad.id];
            kp.cost += k.cost;
            kp.pur += k.pur_amt;

            HourlyAlphaPolicy rp(&rmdp.net, ActionGrid{ad.alpha_ref}, norms);
            EvalRow r = lab.eval_policy_on_day("rmdp", split, ad, rp, log, tag);
            if (split == "test") out.rmdp_test_cost_ok &= r.cost_ok;
            out.rows.push_back(r);
            auto& rpool = pools[{"rmdp", split}][ad.ad.id];
            rpool.cost += r.cost;
            rpool.pur += r.pur_amt;

            AmdpEnv probe(&log, ad.ad.id, 1.0, price_ref, &cfg.profile, norms, 0, block);
            AmdpPolicy ap(&amdp.net, price_ref, norms, probe.participated_total(), block);
            EvalRow a = lab.eval_policy_on_day("amdp", split, ad, ap, log, tag);
            out.rows.push_back(a);
            auto& apool = pools[{"amdp", split}][ad.ad.id];
            apool.cost += a.cost;
            apool.pur += a.pur_amt;
        };
        eval_on(train_log, "train", 1000);
        for (int d = 0; d < cfg.test_days; ++d)
            eval_on(test_logs[d], "test", 2000 + static_cast<std::uint64_t>(d));
    }
    out.rmdp_train = pooled_improvement(pools[{"rmdp", "train"}], pools[{"kb", "train"}]);
    out.rmdp_test = pooled_improvement(pools[{"rmdp", "test"}], pools[{"kb", "test"}]);
    out.amdp_train = pooled_improvement(pools[{"amdp", "train"}], pools[{"kb", "train"}]);
    out.amdp_test = pooled_improvement(pools[{"amdp", "test"}], pools[{"kb", "test"}]);
    write_eval_csv(out.rows, "acceptance_out/single_agent_eval.csv");
    return out;
}

void criteria_single_agent() {
    double t0 = now_s();
    AlgoMeans m = run_single_agent_protocol();
    double dt = now_s() - t0;
    bool c4 = m.amdp_train >= m.rmdp_train && m.rmdp_train >= 0.0 &&
              m.rmdp_test > 0.0 && m.amdp_test < m.rmdp_test && dt < 1800.0;
    report(4, "generalization ordering", c4,
           fmt("amdp train %+.1f%% / test %+.1f%%, rmdp train %+.1f%% / test %+.1f%%, %.0fs",
               100 * m.amdp_train, 100 * m.amdp_test, 100 * m.rmdp_train,
               100 * m.rmdp_test, dt));
    bool c5 = m.rmdp_test >= 0.10 && m.rmdp_test_cost_ok;
    report(5, "equal-cost improvement", c5,
           fmt("rmdp test %+.1f%% vs presets, equal cost %s", 100 * m.rmdp_test,
               m.rmdp_test_cost_ok ? "held" : "violated"));
}

// ---------------------------------------------------------------- criterion 6

std::string market_config() {
    // Ten agents all bidding the same keyword: every auction is a head-on
    // contest, so one agent's aggression raises everyone else's prices.
    std::string ads;
    for (int i = 0; i < 10; ++i) {
        if (i) ads += ",";
        ads += fmt(R"({"id": "m%02d", "daily_budget": 60.0,
          "keywords": [{"keyword": "shared", "bidprice": %.2f}],
          "market": {"pcvr_beta_a": 6.0, "pcvr_beta_b": 14.0, "ctr_base": 0.30,
                     "purchase_amount_mean": 10.0}})",
                   i, 0.8 + 0.04 * i);
    }
    return std::string(R"({
      "seed": 161803,
      "auctions_per_day": 2000,
      "test_days": 3,
      "lambda": 0.5,
      "trainer": {"episodes": 400, "batch_size": 64, "target_sync_period": 200},
      "ads": [)") +
           ads + "]}";
}

void criterion_market() {
    double t0 = now_s();
    Lab lab{parse_config(market_config())};
    const ExperimentConfig& cfg = lab.config();

    MassiveResult competitive = lab.train_market(0.0);
    MassiveResult cooperative = lab.train_market(cfg.lambda);
    for (std::size_t i = 0; i < competitive.logs.size(); ++i)
        collect_shape(fmt("market_l0_m%02zu", i), competitive.logs[i]);
    for (std::size_t i = 0; i < cooperative.logs.size(); ++i)
        collect_shape(fmt("market_l5_m%02zu", i), cooperative.logs[i]);

    std::map<std::string, std::map<std::string, Pooled>> pools; // algo -> ad -> totals
    std::vector<EvalRow> all_rows;
    auto pool_rows = [&](const std::string& algo, const std::vector<EvalRow>& rows) {
        for (const auto& r : rows) {
            auto& p = pools[algo][r.ad_id];
            p.cost += r.cost;
            p.pur += r.pur_amt;
        }
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    };
    for (int d = 0; d < cfg.test_days; ++d) {
        AuctionLog log = lab.test_day(d);
        std::uint64_t tag = 2000 + static_cast<std::uint64_t>(d);
        pool_rows("kb-market", lab.market_eval_rows("kb-market", "test", nullptr, log, tag));
        pool_rows("rmdp-market",
                  lab.market_eval_rows("rmdp-market", "test", &competitive.nets, log, tag));
        pool_rows("m-rmdp", lab.market_eval_rows("m-rmdp", "test", &cooperative.nets,
                                                 log, tag));
    }
    double rmdp_mean = pooled_improvement(pools["rmdp-market"], pools["kb-market"]);
    double mrmdp_mean = pooled_improvement(pools["m-rmdp"], pools["kb-market"]);
    write_eval_csv(all_rows, "acceptance_out/market_eval.csv");
    double dt = now_s() - t0;
    bool pass = mrmdp_mean >= rmdp_mean && rmdp_mean >= 0.0 && dt < 3600.0;
    report(6, "cooperative market gain", pass,
           fmt("10 agents: m-rmdp %+.1f%% vs rmdp %+.1f%% vs presets, %.0fs",
               100 * mrmdp_mean, 100 * rmdp_mean, dt));
}

// ---------------------------------------------------------------- criterion 7

void criterion_convergence() {
    bool pass = !g_shapes.empty();
    std::string worst;
    for (const auto& s : g_shapes) {
        bool ok = s.summary.loss_improved && s.summary.pur_improved;
        if (!ok && worst.empty()) worst = s.tag;
        pass = pass && ok;
    }
    report(7, "convergence shape", pass,
           pass ? fmt("%zu training runs: loss down, return up", g_shapes.size())
                : fmt("run %s failed the decile check", worst.c_str()));
}

// ---------------------------------------------------------------- criterion 8

void criterion_mechanical() {
    double t0 = now_s();
    std::vector<std::string> problems;

    // Exact budget conservation over a full day.
    {
        Ad ad;
        ad.id = "ad1";
        ad.daily_budget = 50.0;
        ad.keyword_tuples = {{"ad1", "kw", 1.0}};
        DayProfile profile = DayProfile::default_profile(1500.0);
        auto log = generate_day(8, profile, {ad}, {{"ad1", AdMarketModel{}}});
        LinearBidPolicy pol(8.0);
        Rng rng(3);
        EpisodeResult res = run_episode(log, "ad1", pol, 50.0, rng, profile);
        double recon = 0.0;
        for (const auto& s : res.steps) recon += s.cost;
        if (std::abs(res.final_budget_left - (50.0 - recon)) > 1e-9)
            problems.push_back("budget conservation");
    }

    // Replay memory evicts strictly first-in-first-out.
    {
        ReplayMemory mem(5);
        for (int i = 0; i < 9; ++i) {
            Transition t;
            t.r = i;
            mem.push(t);
        }
        for (int i = 0; i < 5; ++i)
            if (mem.at(i).r != 4.0 + i) problems.push_back("replay fifo");
    }

    // Target syncs at exactly C, 2C, 3C; epsilon decays monotonically 1 -> 0.
    {
        TrainerConfig cfg;
        cfg.layer_sizes = {kFeatureDim, 8, 10};
        cfg.action_count = 10;
        cfg.batch_size = 4;
        cfg.memory_capacity = 64;
        cfg.episodes = 10;
        cfg.steps_per_episode_hint = 10;
        cfg.target_sync_period = 25;
        AgentLearner learner(cfg, 55);
        MdpState s;
        for (int ep = 0; ep < 10; ++ep) {
            for (int t = 0; t < 10; ++t) learner.observe(s, learner.act(s), 0.0, s, t == 9);
            learner.end_episode(0.0);
        }
        if (learner.log.target_sync_steps != std::vector<long>{25, 50, 75, 100})
            problems.push_back("target sync cadence");
        if (learner.epsilon_trace.front() != 1.0 ||
            std::abs(learner.epsilon_trace.back()) > 1e-12)
            problems.push_back("epsilon endpoints");
        for (std::size_t i = 1; i < learner.epsilon_trace.size(); ++i)
            if (learner.epsilon_trace[i] > learner.epsilon_trace[i - 1] + 1e-12) {
                problems.push_back("epsilon monotonicity");
                break;
            }
    }

    // Checkpoints restore bit-exactly.
    {
        QNetwork net({kFeatureDim, 12, 8});
        Rng rng(4);
        net.init_weights(rng);
        RmsProp opt(net, 1e-4, 0.95, 1e-6);
        fs::create_directories("acceptance_out");
        save_checkpoint("acceptance_out/mech.ckpt", net, opt);
        Checkpoint back = load_checkpoint("acceptance_out/mech.ckpt");
        if (!(back.net == net)) problems.push_back("checkpoint round trip");
    }

    // A full small training run replays identically from the same seed.
    {
        const char* tiny = R"({
          "seed": 4242, "auctions_per_day": 400,
          "calibration_days": 2, "alpha_calibration_days": 1, "test_days": 1,
          "trainer": {"episodes": 6, "batch_size": 16},
          "ads": [{"id": "ad1", "daily_budget": 30.0,
                   "keywords": [{"keyword": "kw", "bidprice": 0.9}]}]
        })";
        Lab lab1{parse_config(tiny)};
        Lab lab2{parse_config(tiny)};
        const AdDerived& a1 = lab1.derived("ad1");
        const AdDerived& a2 = lab2.derived("ad1");
        double c1 = lab1.kb_cost_on(lab1.train_day(), a1, 1000);
        double c2 = lab2.kb_cost_on(lab2.train_day(), a2, 1000);
        if (c1 != c2) problems.push_back("derived determinism");
        TrainResult r1 = lab1.train_rmdp_ad(a1, c1);
        TrainResult r2 = lab2.train_rmdp_ad(a2, c2);
        if (!(r1.net == r2.net)) problems.push_back("training determinism");
    }

    double dt = now_s() - t0;
    std::string detail = problems.empty() ? fmt("all invariants hold, %.0fs", dt)
                                          : "failed: " + problems.front();
    report(8, "mechanical invariants", problems.empty() && dt < 120.0, detail);
}

} // namespace

int main() {
    fs::create_directories("acceptance_out/convergence");
    criterion_gradients();
    criterion_toy_mdp();
    criterion_consistency();
    criteria_single_agent();
    criterion_market();
    criterion_convergence();
    criterion_mechanical();
    std::printf("%s (%d/8 criteria)\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
                8 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
