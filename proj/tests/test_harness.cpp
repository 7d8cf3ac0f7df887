#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fklrl/evaluate.hpp"
#include "fklrl/sweep.hpp"
#include "fklrl/train.hpp"
#include "support.hpp"

using namespace fklrl;
using fklrl::testing::read_file;
using fklrl::testing::scratch_dir;

namespace {

RunConfig small_run(const std::string& name, const std::string& env = "bandit") {
  RunConfig c;
  c.env = env;
  c.hidden_width = 16;
  c.hidden_depth = 1;
  c.replay_batches = 4;
  c.batch_size = 8;
  c.episodes = 30;
  c.checkpoint_every = 10;
  c.out = scratch_dir(name).string();
  return c;
}

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.env = "pendulum";
  c.mode = Variant::RklClipped;
  c.eta = Optimism::zero();
  c.learning_rate = 3.3e-4;
  c.gae_discount = GaeDiscount::Standard;
  c.seed = 123456789012345ULL;
  c.record_wall_clock = true;
  std::stringstream text;
  write_config(text, c);
  EXPECT_EQ(parse_config(text), c);
}

TEST(Config, ParseErrors) {
  std::istringstream unknown("learning_rat = 1e-3\n");
  EXPECT_THROW(parse_config(unknown), std::invalid_argument);
  std::istringstream malformed("gamma 0.9\n");
  EXPECT_THROW(parse_config(malformed), std::invalid_argument);
  std::istringstream bad_number("gamma = ninety\n");
  EXPECT_THROW(parse_config(bad_number), std::invalid_argument);
  std::istringstream comments("# comment\n\n  eta = 0.25  \n");
  EXPECT_EQ(parse_config(comments).eta, Optimism::of(0.25));
  RunConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Metrics, HeaderWrittenOnceAndEpisodesIncrease) {
  const auto dir = scratch_dir("metrics_header");
  const auto path = dir / "metrics.csv";
  RunRecord r;
  {
    MetricsWriter w(path);
    r.episode = 0;
    w.append(r);
  }
  {
    MetricsWriter w(path);
    r.episode = 1;
    w.append(r);
    EXPECT_THROW(w.append(r), std::logic_error);
  }
  const std::string text = read_file(path);
  EXPECT_EQ(text.find(metrics_header()), 0u);
  EXPECT_EQ(text.find(metrics_header(), 1), std::string::npos);
  EXPECT_EQ(read_metrics(path).size(), 2u);
}

TEST(Metrics, SummaryStatistics) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_DOUBLE_EQ(mean({1.0, 2.0, 6.0}), 3.0);
  EXPECT_NEAR(coefficient_of_variation({1.0, 3.0}), 0.5, 1e-15);
  std::vector<RunRecord> rows(5);
  for (int i = 0; i < 5; ++i) rows[static_cast<std::size_t>(i)].episode = i;
  EXPECT_EQ(tail(rows, 2).front().episode, 3);
  EXPECT_EQ(tail(rows, 10).size(), 5u);
}

TEST(Checkpoint, BitExactRoundTrip) {
  std::mt19937_64 rng(1);
  const auto env = make_environment("pendulum");
  const EnvSpec& spec = env->spec();
  const ActorCritic main = init_actor_critic(spec, 8, 2, rng);
  ActorCritic target = init_actor_critic(spec, 8, 2, rng);
  target.value.flat()(0) = 1.0 / 3.0;
  target.policy.flat()(1) = -5e-310;  // subnormal
  const auto dir = scratch_dir("checkpoint");
  save_checkpoint(dir / "c.json", {"pendulum", 0.97, 42, 7, main, target});
  const Checkpoint c = load_checkpoint(dir / "c.json");
  EXPECT_EQ(c.env, "pendulum");
  EXPECT_EQ(c.gamma, 0.97);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.episode, 7);
  EXPECT_EQ(c.main.value.flat(), main.value.flat());
  EXPECT_EQ(c.main.policy.flat(), main.policy.flat());
  EXPECT_EQ(c.target.value.flat(), target.value.flat());
  EXPECT_EQ(c.target.policy.flat(), target.policy.flat());
  EXPECT_TRUE(c.main.head == main.head);
}

TEST(Checkpoint, RejectsCorruptAndNonFinite) {
  EXPECT_THROW(checkpoint_from_text("{\"version\": 99}"), std::exception);
  EXPECT_THROW(checkpoint_from_text("not json"), std::exception);
  std::mt19937_64 rng(2);
  ActorCritic ac = init_actor_critic(make_environment("bandit")->spec(), 4, 1, rng);
  ac.value.flat()(0) = std::nan("");
  EXPECT_THROW(checkpoint_to_text({"bandit", 0.9, 0, 0, ac, ac}), std::exception);
}

TEST(Train, WritesMetricsCheckpointAndMetadata) {
  RunConfig c = small_run("train_smoke");
  c.mode = Variant::Rkl;
  const TrainResult r = train(c);
  ASSERT_EQ(r.status, RunStatus::Completed) << r.error;
  const RunFiles files{c.out};
  const auto rows = read_metrics(files.metrics());
  ASSERT_EQ(rows.size(), 30u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].episode, static_cast<int>(i));
    EXPECT_TRUE(rows[i].episode_return == 0.5 || std::abs(rows[i].episode_return) == 1.0);
    EXPECT_TRUE(std::isnan(rows[i].tau));  // no optimism parameter for the reverse objective
    EXPECT_EQ(rows[i].wall_ms, 0.0);
  }
  EXPECT_EQ(load_checkpoint(files.checkpoint()).episode, 30);
  const std::string meta = read_file(files.metadata());
  EXPECT_NE(meta.find("run.status = completed"), std::string::npos);
  EXPECT_NE(meta.find("mode = rkl"), std::string::npos);
}

TEST(Train, SameSeedGivesIdenticalMetrics) {
  for (const std::string env : {"bandit", "grid"}) {
    RunConfig a = small_run("determinism_a", env);
    RunConfig b = small_run("determinism_b", env);
    a.episodes = b.episodes = env == "grid" ? 5 : 30;
    train(a);
    train(b);
    const std::string ma = read_file(RunFiles{a.out}.metrics());
    EXPECT_EQ(ma, read_file(RunFiles{b.out}.metrics())) << env;
    RunConfig other = small_run("determinism_c", env);
    other.episodes = a.episodes;
    other.seed = 1;
    train(other);
    EXPECT_NE(ma, read_file(RunFiles{other.out}.metrics())) << env;
  }
}

struct Checklist : TrainObserver {
  int online_tau = 0, replay_tau = 0, online_updates = 0, replay_updates = 0, refreshed = 0, pushes = 0;
  int episodes = 0;
  bool online_used_replay = false, replay_used_trace = false;
  double last_behavior_log_prob = 0.0;

  void on_tau_update(Phase p, Uncertainty) override { ++(p == Phase::Online ? online_tau : replay_tau); }
  void on_update(Phase p, bool trace, bool replay) override {
    if (p == Phase::Online) {
      ++online_updates;
      online_used_replay |= replay || !trace;
    } else {
      ++replay_updates;
      replay_used_trace |= trace || !replay;
    }
  }
  void on_priority_refresh(std::size_t n) override { refreshed += static_cast<int>(n); }
  void on_push(const Transition& t) override {
    ++pushes;
    last_behavior_log_prob = t.behavior_log_prob;
  }
  void on_episode(const RunRecord&) override { ++episodes; }
};

TEST(Train, EveryStepUpdatesTauAndEveryPhaseIsExercised) {
  for (Variant mode : {Variant::Fkl, Variant::Rkl}) {
    RunConfig c = small_run("checklist");
    c.mode = mode;
    c.episodes = 10;
    Checklist obs;
    ASSERT_EQ(train(c, &obs).status, RunStatus::Completed);
    EXPECT_EQ(obs.episodes, 10);
    EXPECT_EQ(obs.pushes, 10);  // one step per bandit episode
    EXPECT_EQ(obs.online_tau, obs.online_updates);
    EXPECT_EQ(obs.online_updates, 10);
    EXPECT_EQ(obs.replay_updates, 10 * c.replay_batches);
    EXPECT_EQ(obs.replay_tau, obs.replay_updates);
    EXPECT_EQ(obs.refreshed, obs.replay_updates * c.batch_size);
    EXPECT_FALSE(obs.online_used_replay);
    EXPECT_FALSE(obs.replay_used_trace);
    EXPECT_LE(obs.last_behavior_log_prob, 0.0);
  }
}

TEST(Train, FklTauColumnTracksScheduler) {
  RunConfig c = small_run("fkl_tau");
  c.mode = Variant::Fkl;
  c.eta = Optimism::of(0.5);
  const TrainResult r = train(c);
  ASSERT_EQ(r.status, RunStatus::Completed);
  for (const RunRecord& row : r.records) {
    EXPECT_TRUE(std::isfinite(row.tau));
    EXPECT_GT(row.tau, 0.0);
    EXPECT_NEAR(row.tau, -row.delta_scale / std::log1p(-0.5), 1e-12 * row.tau);
  }
  c.eta = Optimism::zero();
  c.out = scratch_dir("fkl_tau_zero").string();
  for (const RunRecord& row : train(c).records) EXPECT_TRUE(std::isinf(row.tau));
}

struct FailAt : TrainObserver {
  int episode;
  explicit FailAt(int e) : episode(e) {}
  void on_episode(const RunRecord& r) override {
    if (r.episode == episode) throw NumericalError("injected failure");
  }
};

TEST(Train, NumericalFailureKeepsLastCheckpointAndRecordsError) {
  RunConfig c = small_run("abort");
  c.checkpoint_every = 5;
  FailAt fail(7);
  const TrainResult r = train(c, &fail);
  EXPECT_EQ(r.status, RunStatus::NumericalAbort);
  EXPECT_EQ(r.records.size(), 8u);
  const RunFiles files{c.out};
  EXPECT_EQ(load_checkpoint(files.checkpoint()).episode, 5);
  const std::string meta = read_file(files.metadata());
  EXPECT_NE(meta.find("run.status = numerical_abort"), std::string::npos);
  EXPECT_NE(meta.find("run.error_episode = 7"), std::string::npos);
  EXPECT_NE(meta.find("injected failure"), std::string::npos);
}

TEST(Train, DivergentLearningRateAbortsCleanly) {
  RunConfig c = small_run("diverge", "pendulum");
  c.learning_rate = 1e300;
  c.episodes = 2;
  const TrainResult r = train(c);
  EXPECT_EQ(r.status, RunStatus::NumericalAbort);
  EXPECT_FALSE(r.error.empty());
}

TEST(Sweep, OneRowPerRunAndMatchesSingleTraining) {
  RunConfig base = small_run("sweep");
  base.episodes = 12;
  const std::vector<Optimism> etas{Optimism::zero(), Optimism::of(0.5)};
  const std::vector<std::uint64_t> seeds{0, 3};
  const auto rows = sweep(base, etas, seeds, 2);
  ASSERT_EQ(rows.size(), 4u);
  for (const SweepRow& row : rows) {
    EXPECT_EQ(row.status, "completed");
    EXPECT_EQ(row.episodes, 12);
  }
  const std::string summary = read_file(std::filesystem::path(base.out) / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 5);

  RunConfig single = base;
  single.eta = Optimism::of(0.5);
  single.seed = 3;
  single.out = scratch_dir("sweep_single").string();
  train(single);
  EXPECT_EQ(read_file(RunFiles{single.out}.metrics()),
            read_file(RunFiles{sweep_run_directory(base.out, Optimism::of(0.5), 3)}.metrics()));
}

TEST(Evaluate, RowsAreDeterministicAndNearPolicyValue) {
  std::mt19937_64 rng(3);
  RiskyBandit env;
  // zero policy weights: the uniform policy, whose expected return is 0.25
  const ActorCritic agent = init_actor_critic(env.spec(), 8, 1, rng);
  ActorCritic uniform = agent;
  uniform.policy.flat().setZero();
  const auto a = evaluate(uniform, env, 0.99, kDefaultEvalEpisodes, 5);
  const auto b = evaluate(uniform, env, 0.99, kDefaultEvalEpisodes, 5);
  ASSERT_EQ(a.size(), 100u);
  std::ostringstream ca, cb;
  write_eval_csv(ca, a);
  write_eval_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  double sum = 0.0;
  for (const EvalRecord& r : a) sum += r.episode_return;
  // per-episode std of the uniform bandit return is sqrt(0.5625)=0.75
  EXPECT_LT(std::abs(sum / 100 - 0.25), 4.0 * 0.75 / 10.0);
  for (const EvalRecord& r : a) EXPECT_NEAR(r.mean_log_pi, std::log(0.5), 1e-12);

  DistractorGrid grid;
  EXPECT_THROW(evaluate(uniform, grid, 0.99, 1, 0), std::invalid_argument);
}

TEST(Evaluate, CheckpointRoundTripMatchesInMemoryAgent) {
  RunConfig c = small_run("eval_ckpt");
  c.episodes = 5;
  train(c);
  const Checkpoint ck = load_checkpoint(RunFiles{c.out}.checkpoint());
  RiskyBandit env;
  const auto direct = evaluate(ck.main, env, ck.gamma, 20, 9);
  const auto via_file = evaluate_checkpoint(RunFiles{c.out}.checkpoint(), "bandit", 20, 9);
  std::ostringstream a, b;
  write_eval_csv(a, direct);
  write_eval_csv(b, via_file);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_THROW(evaluate_checkpoint(RunFiles{c.out}.checkpoint(), "grid", 1, 0), std::invalid_argument);
}

}  // namespace
