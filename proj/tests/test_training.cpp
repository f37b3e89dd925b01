#include <doctest.h>

#include "scrl/loss.hpp"
#include "scrl/train.hpp"

#include "helpers/finite_diff.hpp"
#include "helpers/toy_dataset.hpp"

#include <cmath>

using namespace scrl;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = unif(rng);
  return m;
}

Matrix random_rows_simplex(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m = random_matrix(r, c, seed).array() + 1.5;
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

}  // namespace

TEST_CASE("swapped prediction loss values") {
  SUBCASE("uniform probabilities give 2 ln B") {
    for (int b : {2, 3, 19}) {
      Tape tape;
      Variable p = tape.constant(Matrix::Constant(5, b, 1.0 / b));
      Matrix q = random_rows_simplex(5, b, b);
      Variable l = swapped_prediction_loss(tape, p, p, q, q);
      CHECK(l.value()(0, 0) == doctest::Approx(2.0 * std::log(b)).epsilon(1e-12));
    }
  }
  SUBCASE("hand-computed single node") {
    Tape tape;
    Matrix pt(1, 2), pf(1, 2), qt(1, 2), qf(1, 2);
    pt << 0.75, 0.25;
    pf << 0.5, 0.5;
    qf << 1, 0;
    qt << 0, 1;
    Variable l = swapped_prediction_loss(tape, tape.constant(pt), tape.constant(pf), qt, qf);
    CHECK(l.value()(0, 0) == doctest::Approx(-std::log(0.75) - std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("loss is nonnegative") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Tape tape;
      Variable pt = tape.constant(random_rows_simplex(6, 4, seed));
      Variable pf = tape.constant(random_rows_simplex(6, 4, seed + 50));
      Matrix qt = random_rows_simplex(6, 4, seed + 100);
      Matrix qf = random_rows_simplex(6, 4, seed + 150);
      CHECK(swapped_prediction_loss(tape, pt, pf, qt, qf).value()(0, 0) >= 0.0);
    }
  }
  SUBCASE("gradient matches finite differences") {
    Parameter zt("zt", 3, 4), zf("zf", 3, 4);
    zt.value = random_matrix(3, 4, 7);
    zf.value = random_matrix(3, 4, 8);
    Matrix qt = random_rows_simplex(3, 4, 9);
    Matrix qf = random_rows_simplex(3, 4, 10);
    auto forward = [&](Tape& t) {
      Variable pt = t.row_softmax(t.leaf(zt), 0.4);
      Variable pf = t.row_softmax(t.leaf(zf), 0.4);
      return swapped_prediction_loss(t, pt, pf, qt, qf);
    };
    Tape tape;
    tape.backward(forward(tape));
    auto loss_fn = [&]() {
      Tape t;
      return forward(t).value()(0, 0);
    };
    CHECK(scrl::testing::max_rel_grad_error({&zt, &zf}, loss_fn) < 1e-5);
  }
}

TEST_CASE("supervised cross-entropy") {
  std::vector<int> labels{0, 1, 0, 1};
  SUBCASE("perfect predictions give zero") {
    Matrix y(4, 2);
    y << 1, 0, 0, 1, 1, 0, 0, 1;
    Tape tape;
    Variable l = supervised_ce_loss(tape, tape.constant(y), labels, {0, 1, 2, 3});
    CHECK(l.value()(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform predictions give T ln M") {
    Tape tape;
    Variable l = supervised_ce_loss(tape, tape.constant(Matrix::Constant(4, 2, 0.5)), labels,
                                    {0, 2, 3});
    CHECK(l.value()(0, 0) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("hand-computed two nodes") {
    Matrix y(4, 2);
    y << 0.5, 0.5, 0.9, 0.1, 0.3, 0.7, 0.75, 0.25;
    // nodes 0 (true prob 0.5) and 3 (true class 1, prob 0.25)
    Tape tape;
    Variable l = supervised_ce_loss(tape, tape.constant(y), labels, {0, 3});
    CHECK(l.value()(0, 0) == doctest::Approx(std::log(2.0) + std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("empty training set rejected") {
    Tape tape;
    CHECK_THROWS_AS(supervised_ce_loss(tape, tape.constant(Matrix::Constant(4, 2, 0.5)), labels,
                                       {}),
                    ValidationError);
  }
}

TEST_CASE("total loss per ablation mode") {
  Tape tape;
  Variable ce = tape.constant(Matrix::Constant(1, 1, 1.0));
  Variable ss = tape.constant(Matrix::Constant(1, 1, 2.0));
  CHECK(total_loss(tape, ce, ss, AblationMode::kFull).value()(0, 0) == 3.0);
  CHECK(total_loss(tape, ce, ss, AblationMode::kNoSsl).value()(0, 0) == 1.0);
  CHECK(total_loss(tape, ce, ss, AblationMode::kTopologyOnly).value()(0, 0) == 1.0);
  Variable zero = tape.constant(Matrix::Zero(1, 1));
  CHECK(total_loss(tape, ce, zero, AblationMode::kFull).value()(0, 0) == 1.0);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient, zero decay: parameters unchanged") {
    Parameter p("p", 2, 2);
    p.value = random_matrix(2, 2, 1);
    Matrix before = p.value;
    AdamOptimizer adam({&p});
    adam.step({&p}, 0.1, 0.0);
    CHECK(p.value == before);
  }
  SUBCASE("first step with g=1 moves by about -lr") {
    Parameter p("p", 1, 1);
    p.grad(0, 0) = 1.0;
    AdamOptimizer adam({&p});
    adam.step({&p}, 0.1, 0.0);
    // bias-corrected first step: lr * g / (|g| + eps)
    CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("weight decay equals an explicit L2 gradient") {
    Parameter a("a", 2, 2), b("b", 2, 2);
    a.value = random_matrix(2, 2, 3);
    b.value = a.value;
    const double lambda = 0.03;
    AdamOptimizer oa({&a}), ob({&b});
    a.grad.setZero();
    b.grad = lambda * b.value;
    oa.step({&a}, 0.05, lambda);
    ob.step({&b}, 0.05, 0.0);
    CHECK(a.value.isApprox(b.value, 1e-14));
  }
}

TEST_CASE("full objective gradient matches finite differences") {
  // N=12, d=5, h=8, U=6, B=4, M=2; dropout off, Sinkhorn targets frozen.
  DatasetBundle ds = scrl::testing::two_cluster_dataset(0);
  Matrix features = random_matrix(12, 5, 99);
  ds.features = features;
  ModelDims dims{.in_dim = 5, .hidden = 8, .embed = 6, .prototypes = 4, .classes = 2};
  ScrlModel model(dims, AblationMode::kFull, 0.0, 0.1);
  model.init_params(4);
  CsrMatrix op_t = normalize_adjacency(ds.adjacency, true);
  CsrMatrix op_f = normalize_adjacency(build_knn_graph(features, 3).adjacency, true);

  std::mt19937_64 rng(0);
  // Freeze the pseudo-labels at the base parameters.
  Matrix q_t, q_f;
  {
    Tape t;
    Variable xt = model.topology.forward(t, op_t, t.constant(features), false, rng);
    Variable xf = model.feature.forward(t, op_f, t.constant(features), false, rng);
    SinkhornConfig sk;
    q_t = pseudo_labels(sinkhorn_assign(model.head.scores(t, xt).value(), sk));
    q_f = pseudo_labels(sinkhorn_assign(model.head.scores(t, xf).value(), sk));
  }
  auto forward = [&](Tape& t) {
    Variable xt = model.topology.forward(t, op_t, t.constant(features), false, rng);
    Variable xf = model.feature.forward(t, op_f, t.constant(features), false, rng);
    Variable pt = model.head.assignment_probs(t, model.head.scores(t, xt));
    Variable pf = model.head.assignment_probs(t, model.head.scores(t, xf));
    Variable l_ss = swapped_prediction_loss(t, pt, pf, q_t, q_f);
    Variable y = classify(t, model, xt, xf);
    Variable l_ce = supervised_ce_loss(t, y, ds.labels, ds.train);
    return total_loss(t, l_ce, l_ss, model.mode);
  };
  model.zero_grad();
  Tape tape;
  tape.backward(forward(tape));
  auto loss_fn = [&]() {
    Tape t;
    return forward(t).value()(0, 0);
  };
  CHECK(scrl::testing::max_rel_grad_error(model.parameters(), loss_fn) < 1e-5);
}

TEST_CASE("no gradient reaches parameters through the pseudo-labels") {
  // If the p-branch contributions are removed (weights on log p set to
  // zero), the self-supervised loss must produce zero gradients.
  Parameter z("z", 4, 3);
  z.value = random_matrix(4, 3, 5);
  Tape tape;
  Variable p = tape.row_softmax(tape.leaf(z), 0.5);
  Variable l = tape.weighted_log_sum(p, Matrix::Zero(4, 3), -1.0);
  tape.backward(l);
  CHECK(z.grad.isZero());
}

TEST_CASE("toy end-to-end training") {
  DatasetBundle ds = scrl::testing::two_cluster_dataset(0);
  TrainConfig cfg = scrl::testing::toy_config();

  SUBCASE("reaches perfect test accuracy in full and no-ssl modes") {
    for (AblationMode mode : {AblationMode::kFull, AblationMode::kNoSsl}) {
      cfg.ablation = mode;
      cfg.seed = 1;
      TrainResult r = train(ds, cfg);
      CHECK(r.test.accuracy == doctest::Approx(1.0));
    }
  }
  SUBCASE("same seed gives identical metric sequences") {
    cfg.seed = 3;
    cfg.epochs = 20;
    TrainResult a = train(ds, cfg);
    TrainResult b = train(ds, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].loss_total == b.history[i].loss_total);
      CHECK(a.history[i].test_acc == b.history[i].test_acc);
    }
  }
  SUBCASE("total loss decomposes as ce + ss in full mode") {
    cfg.ablation = AblationMode::kFull;
    cfg.epochs = 10;
    TrainResult r = train(ds, cfg);
    for (const auto& em : r.history) {
      CHECK(em.loss_total == doctest::Approx(em.loss_ce + em.loss_ss).epsilon(1e-9));
      CHECK(em.loss_ss >= 0.0);
    }
  }
  SUBCASE("no-ssl leaves the prototypes untouched") {
    cfg.ablation = AblationMode::kNoSsl;
    cfg.epochs = 10;
    TrainResult r = train(ds, cfg);
    CHECK(r.model.head.prototypes.grad.isZero());
  }
  SUBCASE("training loss does not increase over the first 10 epochs") {
    cfg.learning_rate = 1e-3;
    cfg.dropout = 0.0;
    cfg.epochs = 10;
    for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
      cfg.seed = seed;
      TrainResult r = train(ds, cfg);
      for (std::size_t i = 1; i < r.history.size(); ++i)
        CHECK(r.history[i].loss_total <= r.history[i - 1].loss_total + 1e-9);
    }
  }
  SUBCASE("ablation modes run end to end") {
    cfg.epochs = 15;
    for (AblationMode mode : {AblationMode::kTopologyOnly, AblationMode::kFeatureOnly}) {
      cfg.ablation = mode;
      TrainResult r = train(ds, cfg);
      CHECK(r.history.size() == 15);
      CHECK(r.test.accuracy >= 0.0);
    }
  }
}

TEST_CASE("evaluate metrics") {
  std::vector<int> labels{0, 1};
  SUBCASE("all correct") {
    auto m = classification_metrics({0, 1}, labels, {0, 1}, 2);
    CHECK(m.accuracy == 1.0);
    CHECK(m.macro_f1 == 1.0);
  }
  SUBCASE("hand confusion matrix: TP=1 FP=1 FN=0 TN=0") {
    // truth {1, 0}, predictions {1, 1}
    auto m = classification_metrics({1, 1}, {1, 0}, {0, 1}, 2);
    CHECK(m.accuracy == 0.5);
    CHECK(m.macro_f1 == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("metrics invariant under consistent class permutation") {
    std::vector<int> truth{0, 1, 2, 1, 0, 2}, pred{0, 2, 2, 1, 1, 0};
    std::vector<int> idx{0, 1, 2, 3, 4, 5};
    auto base = classification_metrics(pred, truth, idx, 3);
    std::vector<int> map{2, 0, 1};
    std::vector<int> truth_p, pred_p;
    for (int y : truth) truth_p.push_back(map[y]);
    for (int y : pred) pred_p.push_back(map[y]);
    auto permuted = classification_metrics(pred_p, truth_p, idx, 3);
    CHECK(base.accuracy == permuted.accuracy);
    CHECK(base.macro_f1 == doctest::Approx(permuted.macro_f1));
  }
  SUBCASE("empty index set rejected") {
    CHECK_THROWS_AS(classification_metrics({0, 1}, labels, {}, 2), ValidationError);
  }
}
