#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "edgesim/dataset.hpp"
#include "edgesim/distributed.hpp"
#include "oracles.hpp"

using namespace edgesim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinearModel random_model(std::size_t c, std::size_t d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  WeightMatrix w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d + 1));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * n01(rng);
  return LinearModel(w);
}

struct Blobs {
  Dataset train, test;
};

Blobs make_blobs() {
  Rng rng = make_stream(5, Stream::data);
  return {synth_blobs(4, 10, 80, 1.2, rng), synth_blobs(4, 10, 40, 1.2, rng)};
}

}  // namespace

TEST(Allocate, HandWorkedExamples) {
  const std::vector<std::size_t> even{30000, 30000};
  EXPECT_EQ(allocate_blocks(even, 200).blocks, (std::vector<std::size_t>{100, 100}));
  const std::vector<std::size_t> third{1, 2};
  EXPECT_EQ(allocate_blocks(third, 200).blocks, (std::vector<std::size_t>{66, 133}));
  const std::vector<std::size_t> nine{54000, 6000};
  EXPECT_EQ(allocate_blocks(nine, 200).blocks, (std::vector<std::size_t>{180, 20}));
  const std::vector<std::size_t> with_zero{0, 5, 5};
  EXPECT_EQ(allocate_blocks(with_zero, 7).blocks, (std::vector<std::size_t>{0, 3, 3}));
}

TEST(Allocate, ErrorCases) {
  const std::vector<std::size_t> zeros{0, 0};
  EXPECT_THROW(allocate_blocks(zeros, 10), std::invalid_argument);
  const std::vector<std::size_t> ok{1, 2};
  EXPECT_THROW(allocate_blocks(ok, 0), std::invalid_argument);
  EXPECT_THROW(allocate_equal(3, 2), std::invalid_argument);
}

TEST(Allocate, FuzzAgainstBigIntegerOracle) {
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> k_dist(1, 12);
  std::uniform_int_distribution<int> mag(0, 62);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::size_t> sizes(k_dist(rng));
    for (auto& d : sizes) d = rng() >> mag(rng);
    if (std::all_of(sizes.begin(), sizes.end(), [](auto d) { return d == 0; })) sizes[0] = 1;
    const std::size_t n = 1 + (rng() >> mag(rng));
    const auto plan = allocate_blocks(sizes, n);
    ASSERT_EQ(plan.blocks, oracle::proportional_floor(sizes, n)) << "trial " << trial;
    ASSERT_LE(plan.used(), n);
    ASSERT_GT(plan.used() + sizes.size(), n);  // floor loses less than one block per device
  }
}

TEST(Allocate, BaselinePlans) {
  EXPECT_EQ(allocate_equal(3, 200).blocks, (std::vector<std::size_t>{66, 66, 66}));
  const std::vector<std::size_t> sizes{10, 40, 40, 5};
  EXPECT_EQ(allocate_largest_only(sizes, 200).blocks, (std::vector<std::size_t>{0, 200, 0, 0}));
}

TEST(ModelUpload, ZeroCopiesConsumeNothing) {
  Channel ch(TxSnr(1.0), 1);
  Channel fresh(TxSnr(1.0), 1);
  Rng rng(1);
  EXPECT_TRUE(transmit_model(random_model(3, 4, rng), 0, ch).empty());
  EXPECT_EQ(ch.draw().gain_power, fresh.draw().gain_power);
}

TEST(ModelUpload, NoiselessCopiesAreExact) {
  Channel ch(TxSnr(kInf), 2);
  Rng rng(2);
  const auto m = random_model(3, 4, rng, 0.01);
  const auto copies = transmit_model(m, 5, ch);
  ASSERT_EQ(copies.size(), 5u);
  for (const auto& c : copies) EXPECT_TRUE(c.weights().isApprox(m.weights(), 1e-14));
}

TEST(ModelUpload, ZeroModelStaysZero) {
  Channel ch(TxSnr(1.0), 3);
  const auto copies = transmit_model(LinearModel(2, 3), 3, ch);
  for (const auto& c : copies) EXPECT_EQ(c.weights(), WeightMatrix::Zero(2, 4));
}

TEST(ModelUpload, AveragingCopiesShrinksVarianceAsOneOverCount) {
  // With one block per copy the SNR is gain * tx, and E[1/gain] diverges for
  // Rayleigh fading. Condition on a fixed channel instead: the noise of k
  // independent draws at the same SNR averages down by 1/k.
  Rng noise = make_stream(4, Stream::noise);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1000);
  Eigen::VectorXd one = add_equivalent_noise(zero, 2.0, noise);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(1000);
  for (int k = 0; k < 8; ++k) avg += add_equivalent_noise(zero, 2.0, noise);
  avg /= 8.0;
  const double ratio = oracle::sample_variance(avg) / oracle::sample_variance(one);
  EXPECT_NEAR(ratio, 1.0 / 8.0, 0.03);
}

TEST(Aggregate, HandWorkedExamples) {
  const LinearModel a(WeightMatrix::Constant(2, 3, 1.0));
  const LinearModel b(WeightMatrix::Constant(2, 3, 4.0));
  const std::vector<LinearModel> pair{a, b};
  EXPECT_EQ(aggregate_equal(pair).weights(), WeightMatrix::Constant(2, 3, 2.5));

  // Two copies of a, one of b, budget 4: (1 + 1 + 4) / 4.
  const ModelCopies copies{{a, a}, {b}};
  EXPECT_EQ(aggregate_importance(copies, 4).weights(), WeightMatrix::Constant(2, 3, 1.5));
  EXPECT_EQ(aggregate_importance(copies, 3).weights(), WeightMatrix::Constant(2, 3, 2.0));
}

TEST(Aggregate, MatchesLoopOracle) {
  Rng rng(6);
  std::uniform_int_distribution<std::size_t> nk(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    ModelCopies copies(3);
    std::size_t count = 0;
    for (auto& per : copies) {
      const std::size_t n = nk(rng);
      for (std::size_t i = 0; i < n; ++i) per.push_back(random_model(2, 3, rng));
      count += n;
    }
    if (count == 0) continue;
    const std::size_t total = count + trial % 4;
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(2, 4);
    for (Eigen::Index i = 0; i < 2; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        double s = 0.0;
        for (const auto& per : copies) {
          for (const auto& m : per) s += m.weights()(i, j);
        }
        ref(i, j) = s / static_cast<double>(total);
      }
    }
    EXPECT_LE((aggregate_importance(copies, total).weights() - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Aggregate, LinearAndScaleInvariantPrediction) {
  Rng rng(7);
  const ModelCopies x{{random_model(3, 2, rng), random_model(3, 2, rng)}, {random_model(3, 2, rng)}};
  ModelCopies y = x;
  for (auto& per : y) {
    for (auto& m : per) m.weights() *= 3.0;
  }
  const auto ax = aggregate_importance(x, 5);
  const auto ay = aggregate_importance(y, 5);
  EXPECT_TRUE(ay.weights().isApprox(3.0 * ax.weights(), 1e-12));
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd v = Eigen::VectorXd::Random(2);
    EXPECT_EQ(predict(ax, v), predict(ay, v));
  }
}

TEST(Aggregate, DegenerateAndOverBudget) {
  EXPECT_THROW(aggregate_importance(ModelCopies{{}, {}}, 5), DegenerateAllocation);
  const ModelCopies three{{LinearModel(1, 1), LinearModel(1, 1), LinearModel(1, 1)}};
  EXPECT_THROW(aggregate_importance(three, 2), std::invalid_argument);
  EXPECT_THROW(aggregate_equal({}), std::invalid_argument);
}

TEST(LocalTrain, EmptyDataGivesZeroModel) {
  Rng rng(1);
  const auto m = local_train(Dataset{}, 3, 4, TrainConfig{}, rng);
  EXPECT_EQ(m.weights(), WeightMatrix::Zero(3, 5));
}

TEST(LocalTrain, LearnsSeparableData) {
  Rng data = make_stream(9, Stream::data);
  const auto ds = synth_blobs(3, 4, 30, 10.0, data);
  Rng rng = make_stream(9, Stream::sgd);
  const auto m = local_train(ds, 3, 4, TrainConfig{1e-4, 5, true}, rng);
  EXPECT_DOUBLE_EQ(evaluate(m, ds), 1.0);
}

TEST(RunDistributed, RatioOneMakesProposedAndEqualIdentical) {
  const auto b = make_blobs();
  DistributedOptions opt;
  opt.split = SplitSpec::by_ratio(1.0);
  opt.tx_snr = TxSnr::from_db(10.0);
  const auto p = run_distributed(b.train, b.test, opt, 3);
  opt.scheme = DistributedScheme::equal_allocation;
  const auto e = run_distributed(b.train, b.test, opt, 3);
  EXPECT_EQ(p.plan.blocks, e.plan.blocks);
  EXPECT_EQ(p.accuracy, e.accuracy);
}

TEST(RunDistributed, PlanFollowsSplitSizes) {
  const auto b = make_blobs();
  DistributedOptions opt;
  opt.split = SplitSpec::random(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = run_distributed(b.train, b.test, opt, seed);
    ASSERT_EQ(t.sizes.size(), 4u);
    EXPECT_EQ(std::accumulate(t.sizes.begin(), t.sizes.end(), std::size_t{0}), b.train.size());
    EXPECT_EQ(t.plan.blocks, oracle::proportional_floor(t.sizes, 200));
    EXPECT_EQ(t.blocks_spent, t.plan.used());
    EXPECT_LE(t.blocks_spent, 200u);
  }
}

TEST(RunDistributed, NoiselessLimitMatchesDirectAggregation) {
  const auto b = make_blobs();
  DistributedOptions opt;
  opt.split = SplitSpec::by_ratio(3.0);
  opt.tx_snr = TxSnr(kInf);
  const std::uint64_t seed = 8;
  const auto t = run_distributed(b.train, b.test, opt, seed);

  Rng split_rng = make_stream(seed, Stream::split);
  const auto parts = split(b.train, opt.split, split_rng);
  Rng sgd = make_stream(seed, Stream::sgd);
  std::vector<LinearModel> locals;
  for (const auto& p : parts) locals.push_back(local_train(p, 4, 10, opt.train, sgd));
  const auto plan = allocate_blocks(t.sizes, 200);
  WeightMatrix w = WeightMatrix::Zero(4, 11);
  for (std::size_t k = 0; k < 2; ++k) w += static_cast<double>(plan.blocks[k]) * locals[k].weights();
  w /= 200.0;
  EXPECT_NEAR(t.accuracy, evaluate(LinearModel(w), b.test), 1e-9);
}

TEST(RunDistributed, SeededDeterminism) {
  const auto b = make_blobs();
  DistributedOptions opt;
  opt.split = SplitSpec::random(3);
  opt.scheme = DistributedScheme::largest_only;
  const auto x = run_distributed(b.train, b.test, opt, 11);
  const auto y = run_distributed(b.train, b.test, opt, 11);
  EXPECT_EQ(x.sizes, y.sizes);
  EXPECT_EQ(x.accuracy, y.accuracy);
}

TEST(PlanCsv, Format) {
  const std::vector<std::size_t> sizes{1, 2};
  std::ostringstream os;
  write_plan_csv(os, sizes, allocate_blocks(sizes, 200));
  EXPECT_EQ(os.str(), "k,D_k,N_k\n1,1,66\n2,2,133\n");
}
