#include <limits>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "edgesim/centralized.hpp"
#include "edgesim/dataset.hpp"
#include "oracles.hpp"

using namespace edgesim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Blobs {
  Dataset train, test;
};

Blobs make_blobs(double separation = 1.2, std::uint64_t seed = 77) {
  Rng rng = make_stream(seed, Stream::data);
  return {synth_blobs(4, 10, 60, separation, rng), synth_blobs(4, 10, 40, separation, rng)};
}

CentralizedOptions options(ThresholdPolicy policy, double tx_db, std::size_t blocks) {
  CentralizedOptions opt;
  opt.policy = policy;
  opt.tx_snr = TxSnr::from_db(tx_db);
  opt.blocks = blocks;
  opt.eval_every = 0;
  return opt;
}

}  // namespace

TEST(Thresholds, SelectByImportance) {
  const ThresholdPolicy p(10.0, 0.1);
  EXPECT_EQ(threshold_for(Importance::more, p), 10.0);
  EXPECT_EQ(threshold_for(Importance::less, p), 0.1);
  EXPECT_THROW(ThresholdPolicy(0.1, 10.0), std::invalid_argument);
  EXPECT_THROW(ThresholdPolicy(0.0, 0.0), std::invalid_argument);
  EXPECT_NEAR(ThresholdPolicy::from_db(10.0, -10.0).gamma_high, 10.0, 1e-12);
}

TEST(Transmit, ZeroThresholdUsesOneBlock) {
  Channel ch(TxSnr(1.0), 1);
  BlockBudget budget(10);
  const auto rx = transmit_until_threshold({Eigen::VectorXd::Ones(3), 0}, 0.0, budget, ch);
  EXPECT_EQ(rx.blocks_used, 1u);
  EXPECT_EQ(budget.spent(), 1u);
}

TEST(Transmit, InfiniteTxSnrUsesOneBlockAndIsExact) {
  Channel ch(TxSnr(kInf), 2);
  BlockBudget budget(10);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, -1, 1);
  const auto rx = transmit_until_threshold({x, 0}, 1e6, budget, ch);
  EXPECT_EQ(rx.blocks_used, 1u);
  EXPECT_EQ(rx.payload_estimate, x);
}

TEST(Transmit, MeanBlocksMatchRenewalOracle) {
  // Blocks until an Exp(tx) running sum reaches g is 1 + Poisson(g / tx).
  for (const auto& [gamma, tx] : std::vector<std::pair<double, double>>{{10.0, 2.5}, {1.0, 1.0}, {0.1, 2.5}}) {
    Channel ch(TxSnr(tx), 3);
    const std::size_t runs = 20000;
    double total = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      BlockBudget budget(1000);
      total += static_cast<double>(
          transmit_until_threshold({Eigen::VectorXd::Zero(1), 0}, gamma, budget, ch).blocks_used);
    }
    const double mean = total / runs;
    const double simulated = oracle::renewal_mean_blocks(gamma, tx, runs, 99);
    EXPECT_NEAR(mean / simulated, 1.0, 0.02) << gamma << "/" << tx;
    EXPECT_NEAR(mean / (1.0 + gamma / tx), 1.0, 0.02) << gamma << "/" << tx;
  }
}

TEST(Transmit, StopsAtBudgetAndThenRefuses) {
  Channel ch(TxSnr(1e-6), 4);
  BlockBudget budget(1);
  const auto rx = transmit_until_threshold({Eigen::VectorXd::Zero(2), 0}, 1e9, budget, ch);
  EXPECT_EQ(rx.blocks_used, 1u);
  EXPECT_TRUE(budget.exhausted());
  EXPECT_THROW(transmit_until_threshold({Eigen::VectorXd::Zero(2), 0}, 1.0, budget, ch),
               BudgetExhausted);
}

TEST(Transmit, ExtendingNeverLowersCombinedSnr) {
  Channel ch(TxSnr(0.5), 5);
  BlockBudget budget(100000);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ChannelDraw> draws;
    extend_until_threshold(draws, 0.3, budget, ch);
    const double low = mrc_combine(draws);
    extend_until_threshold(draws, 3.0, budget, ch);
    EXPECT_GE(mrc_combine(draws), low);
    EXPECT_GE(mrc_combine(draws), 3.0);
  }
}

TEST(RunCentralized, SingleBlockBudget) {
  const auto b = make_blobs();
  const auto trace = run_centralized(b.train, b.test, options(ThresholdPolicy::from_db(10, -10), 4, 1), 1);
  ASSERT_EQ(trace.rows.size(), 1u);
  EXPECT_EQ(trace.blocks_spent, 1u);
  EXPECT_EQ(trace.rows[0].blocks, 1u);
}

class Invariants : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Invariants, BudgetThresholdAndAccounting) {
  const auto b = make_blobs();
  const auto policy = ThresholdPolicy::from_db(10, -5);
  const auto trace = run_centralized(b.train, b.test, options(policy, 0, 300), GetParam());

  EXPECT_LE(trace.blocks_spent, 300u);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    const auto& r = trace.rows[i];
    EXPECT_EQ(r.index, i + 1);
    EXPECT_GE(r.blocks, 1u);
    sum += r.blocks;
    EXPECT_EQ(r.spent_total, sum);
    const bool budget_cut = r.spent_total == 300u;
    if (!budget_cut) {
      EXPECT_GE(r.combined_snr, threshold_for(r.importance, policy));
    }
  }
  EXPECT_EQ(sum, trace.blocks_spent);
  // Either the budget or the data ran out.
  EXPECT_TRUE(trace.blocks_spent == 300u || trace.rows.size() == b.train.size());
}

INSTANTIATE_TEST_SUITE_P(Seeds, Invariants, ::testing::Range<std::uint64_t>(0, 8));

TEST(RunCentralized, MoreImportantSamplesGetMoreBlocks) {
  const auto b = make_blobs();
  double more = 0, less = 0;
  std::size_t n_more = 0, n_less = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto trace =
        run_centralized(b.train, b.test, options(ThresholdPolicy::from_db(10, -10), 0, 100000), seed);
    for (const auto& r : trace.rows) {
      (r.importance == Importance::more ? more : less) += static_cast<double>(r.blocks);
      ++(r.importance == Importance::more ? n_more : n_less);
    }
  }
  ASSERT_GT(n_more, 0u);
  ASSERT_GT(n_less, 0u);
  EXPECT_GE(more / n_more, less / n_less);
}

TEST(RunCentralized, EqualThresholdsReduceToUniformPolicy) {
  const auto b = make_blobs();
  auto a = options(ThresholdPolicy::from_db(-3, -3), 4, 200);
  auto u = options(ThresholdPolicy::uniform(db_to_linear(-3)), 4, 200);
  a.eval_every = u.eval_every = 10;
  EXPECT_EQ(trace_csv(run_centralized(b.train, b.test, a, 9)),
            trace_csv(run_centralized(b.train, b.test, u, 9)));
}

TEST(RunCentralized, NoiselessLimitEqualsCleanStreamingTraining) {
  const auto b = make_blobs(1.0);
  auto opt = options(ThresholdPolicy::from_db(10, -10), 0, 120);
  opt.tx_snr = TxSnr(kInf);
  opt.eval_every = 1;
  const std::uint64_t seed = 13;
  const auto trace = run_centralized(b.train, b.test, opt, seed);
  ASSERT_EQ(trace.rows.size(), 120u);

  // Independent replay: same presentation order, clean payloads, plain Pegasos.
  std::vector<std::size_t> order(b.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = make_stream(seed, Stream::shuffle);
  std::shuffle(order.begin(), order.end(), shuffle);
  Rng sgd = make_stream(seed, Stream::sgd);
  oracle::NaivePegasos ref(b.train.num_classes, b.train.dims());
  std::vector<Sample> buffer;
  for (std::size_t i = 0; i < 120; ++i) {
    buffer.push_back(b.train.sample(order[i]));
    ref.epoch(buffer, opt.train.lambda, sgd);
    EXPECT_EQ(trace.rows[i].blocks, 1u);
    ASSERT_TRUE(trace.rows[i].accuracy.has_value());
    EXPECT_NEAR(*trace.rows[i].accuracy, ref.accuracy(b.test), 1e-9) << "update " << i + 1;
  }
  EXPECT_NEAR(trace.final_accuracy, ref.accuracy(b.test), 1e-9);
}

TEST(RunCentralized, SeededDeterminismAndSeedSensitivity) {
  const auto b = make_blobs();
  auto opt = options(ThresholdPolicy::from_db(5, -5), 0, 150);
  opt.eval_every = 25;
  const auto x = trace_csv(run_centralized(b.train, b.test, opt, 3));
  EXPECT_EQ(x, trace_csv(run_centralized(b.train, b.test, opt, 3)));
  EXPECT_NE(x, trace_csv(run_centralized(b.train, b.test, opt, 4)));
}

TEST(RunCentralized, ConvergenceRuleStopsEarly) {
  const auto b = make_blobs(6.0);
  auto opt = options(ThresholdPolicy::from_db(0, -10), 10, 100000);
  opt.convergence = {true, 5, 1.0, 0.1};
  const auto trace = run_centralized(b.train, b.test, opt, 1);
  EXPECT_TRUE(trace.converged);
  EXPECT_EQ(trace.rows.size(), 5u);

  opt.convergence = {true, 5, 1.0, 1.0};
  EXPECT_THROW(run_centralized(b.train, b.test, opt, 1), std::invalid_argument);
}

TEST(RunCentralized, RejectsEmptyTrainingSet) {
  const auto b = make_blobs();
  EXPECT_THROW(run_centralized(Dataset{}, b.test, options(ThresholdPolicy::uniform(1), 0, 5), 1),
               std::invalid_argument);
}

TEST(TraceCsv, HeaderAndRows) {
  const auto b = make_blobs();
  auto opt = options(ThresholdPolicy::from_db(0, -10), 0, 20);
  opt.eval_every = 2;
  const auto trace = run_centralized(b.train, b.test, opt, 2);
  std::istringstream is(trace_csv(trace));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "i,importance,blocks,spent_total,combined_snr_db,accuracy");
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const bool has_acc = line.back() != ',';
    EXPECT_EQ(has_acc, n % 2 == 0) << line;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
  }
  EXPECT_EQ(n, trace.rows.size());
  EXPECT_EQ(format_snr_db(kInf), "inf");
  EXPECT_EQ(format_snr_db(100.0), "20");
}
