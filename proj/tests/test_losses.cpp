#include <doctest.h>

#include <cmath>

#include "aada/errors.hpp"
#include "aada/losses.hpp"
#include "aada/ops.hpp"
#include "test_util.hpp"

using namespace aada;
using namespace aada::nn;
using aada::testutil::gradcheck;
using aada::testutil::random_tensor;

namespace {

// random positive score maps, optionally normalized per pixel
Var random_scores(std::vector<int> shape, RngStream& rng, bool normalize) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.05, 1.0);
    if (normalize) {
        const int B = shape[0], l = shape[1];
        const int64_t hw = static_cast<int64_t>(shape[2]) * shape[3];
        for (int b = 0; b < B; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                double s = 0.0;
                for (int c = 0; c < l; ++c) s += t[(b * l + c) * hw + p];
                for (int c = 0; c < l; ++c) t[(b * l + c) * hw + p] /= s;
            }
    }
    return leaf(std::move(t));
}

std::vector<LabelMap> random_labels(int B, int H, int W, int l, RngStream& rng,
                                    double ignore_frac = 0.0) {
    std::vector<LabelMap> maps;
    for (int b = 0; b < B; ++b) {
        LabelMap m(H, W);
        for (auto& v : m.v)
            v = rng.uniform() < ignore_frac ? kIgnoreLabel : rng.uniform_int(0, l - 1);
        maps.push_back(std::move(m));
    }
    return maps;
}

}  // namespace

TEST_CASE("ace_weights oracle values") {
    SUBCASE("equal IoUs give unit weights") {
        auto cw = ace_weights({0.6, 0.6, 0.6}, {true, true, true}, 4.0);
        for (double w : cw.w) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("hand-evaluated two-class case") {
        auto cw = ace_weights({0.9, 0.5}, {true, true}, 4.0);
        CHECK(cw.w[0] == doctest::Approx(0.4096).epsilon(1e-12));
        CHECK(cw.w[1] == doctest::Approx(2.0736).epsilon(1e-12));
    }
    SUBCASE("kappa zero reduces to plain cross-entropy") {
        auto cw = ace_weights({0.9, 0.2, 0.4}, {true, true, true}, 0.0);
        for (double w : cw.w) CHECK(w == 1.0);
    }
    SUBCASE("absent classes get weight one and stay out of the mean") {
        auto cw = ace_weights({0.8, 0.0, 0.4}, {true, false, true}, 4.0);
        CHECK(cw.w[1] == 1.0);
        // mean over present = 0.6
        CHECK(cw.w[0] == doctest::Approx(std::pow(0.8, 4)).epsilon(1e-12));
        CHECK(cw.w[2] == doctest::Approx(std::pow(1.2, 4)).epsilon(1e-12));
    }
    SUBCASE("permutation equivariance") {
        auto cw = ace_weights({0.9, 0.5, 0.2}, {true, true, true}, 4.0);
        auto cwp = ace_weights({0.2, 0.9, 0.5}, {true, true, true}, 4.0);
        CHECK(cw.w[0] == doctest::Approx(cwp.w[1]).epsilon(1e-12));
        CHECK(cw.w[1] == doctest::Approx(cwp.w[2]).epsilon(1e-12));
        CHECK(cw.w[2] == doctest::Approx(cwp.w[0]).epsilon(1e-12));
    }
}

TEST_CASE("weighted_ce oracle values") {
    const int l = 2;
    SUBCASE("perfect one-hot scores give ~zero loss") {
        Tensor t({1, l, 2, 2});
        std::vector<LabelMap> labels{LabelMap(2, 2, 0)};
        for (int p = 0; p < 4; ++p) t[p] = 1.0;  // class 0 plane
        auto loss = losses::weighted_ce(leaf(std::move(t)), labels, ClassWeights::unit(l));
        CHECK(loss->value[0] <= 1e-10);
    }
    SUBCASE("uniform scores give log l") {
        Tensor t({1, l, 2, 2}, 0.5);
        std::vector<LabelMap> labels{LabelMap(2, 2, 1)};
        auto loss = losses::weighted_ce(leaf(std::move(t)), labels, ClassWeights::unit(l));
        CHECK(loss->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("class weights scale the per-pixel terms") {
        Tensor t({1, l, 2, 2}, 0.5);
        std::vector<LabelMap> labels{LabelMap(2, 2, 0)};
        ClassWeights cw{{2.0, 1.0}, 4.0};
        auto loss = losses::weighted_ce(leaf(std::move(t)), labels, cw);
        CHECK(loss->value[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("IGNORE pixels drop out of sum and normalizer") {
        Tensor t({1, l, 1, 2});
        t[0] = 0.25;  // class0 @ pixel0
        t[1] = 0.9;
        t[2] = 0.75;
        t[3] = 0.1;
        LabelMap m(1, 2, 0);
        m.v[1] = kIgnoreLabel;
        auto loss = losses::weighted_ce(leaf(std::move(t)), {m}, ClassWeights::unit(l));
        CHECK(loss->value[0] == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
    }
}

TEST_CASE("focal loss oracle values") {
    const int l = 3;
    SUBCASE("gamma 0 equals unit-weight cross-entropy bit for bit") {
        RngStream rng(3);
        auto scores = random_scores({2, l, 4, 4}, rng, true);
        auto labels = random_labels(2, 4, 4, l, rng, 0.1);
        auto f = losses::focal_loss(scores, labels, 0.0);
        auto ce = losses::weighted_ce(scores, labels, ClassWeights::unit(l));
        CHECK(f->value[0] == ce->value[0]);  // exact
    }
    SUBCASE("p_ref one gives zero") {
        Tensor t({1, l, 1, 1});
        t[1] = 1.0;  // class 1
        auto loss = losses::focal_loss(leaf(std::move(t)), {LabelMap(1, 1, 1)}, 2.0);
        CHECK(loss->value[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("hand value: p=0.5, gamma=2") {
        Tensor t({1, l, 1, 1});
        t[0] = 0.5;
        t[1] = 0.3;
        t[2] = 0.2;
        auto loss = losses::focal_loss(leaf(std::move(t)), {LabelMap(1, 1, 0)}, 2.0);
        CHECK(loss->value[0] == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("adversarial generator loss oracle values") {
    SUBCASE("fooled completely") {
        auto loss = losses::adv_gen_loss(leaf(Tensor({1, 1, 2, 2}, 1.0)));
        CHECK(loss->value[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("chance level") {
        auto loss = losses::adv_gen_loss(leaf(Tensor({1, 1, 2, 2}, 0.5)));
        CHECK(loss->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("mixed map") {
        Tensor t({1, 1, 1, 2});
        t[0] = 0.5;
        t[1] = 0.25;
        auto loss = losses::adv_gen_loss(leaf(std::move(t)));
        CHECK(loss->value[0] ==
              doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("adversarial discriminator loss oracle values") {
    SUBCASE("perfect discriminator") {
        auto loss = losses::adv_disc_loss(leaf(Tensor({1, 1, 2, 2}, 1.0)),
                                          leaf(Tensor({1, 1, 2, 2}, 0.0)));
        CHECK(loss->value[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("chance level gives 2 log 2") {
        auto loss = losses::adv_disc_loss(leaf(Tensor({1, 1, 2, 2}, 0.5)),
                                          leaf(Tensor({1, 1, 2, 2}, 0.5)));
        CHECK(loss->value[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("hand value: 0.8 / 0.3") {
        auto loss = losses::adv_disc_loss(leaf(Tensor({1, 1, 1, 1}, 0.8)),
                                          leaf(Tensor({1, 1, 1, 1}, 0.3)));
        CHECK(loss->value[0] ==
              doctest::Approx(-(std::log(0.8) + std::log(0.7))).epsilon(1e-12));
    }
}

TEST_CASE("discriminator regularization loss oracle values") {
    SUBCASE("constant maps give zero") {
        auto loss = losses::disc_reg_loss(leaf(Tensor({1, 1, 2, 2}, 0.7)),
                                          leaf(Tensor({1, 1, 2, 2}, 0.2)));
        CHECK(loss->value[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("hand value: {0,1} plus constant set") {
        Tensor t({1, 1, 1, 2});
        t[0] = 0.0;
        t[1] = 1.0;
        auto loss = losses::disc_reg_loss(leaf(std::move(t)), leaf(Tensor({1, 1, 1, 2}, 0.5)));
        CHECK(loss->value[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    }
    SUBCASE("translation invariance") {
        RngStream rng(5);
        Tensor a = random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9);
        Tensor b = random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9);
        Tensor a_shift = a;
        for (int64_t i = 0; i < a_shift.size(); ++i) a_shift[i] += 0.05;
        auto l1 = losses::disc_reg_loss(leaf(a), leaf(b));
        auto l2 = losses::disc_reg_loss(leaf(a_shift), leaf(b));
        CHECK(l1->value[0] == doctest::Approx(l2->value[0]).epsilon(1e-12));
    }
    SUBCASE("rejects degenerate sets") {
        CHECK_THROWS_AS(losses::disc_reg_loss(leaf(Tensor({1, 1, 1, 1}, 0.5)),
                                              leaf(Tensor({1, 1, 1, 1}, 0.5))),
                        std::invalid_argument);
    }
}

TEST_CASE("joint and discriminator total losses") {
    auto s = [](double v) { return leaf(Tensor::scalar(v)); };
    SUBCASE("paper weights") {
        LossWeights lw;  // omega_t = omega_g = 2
        auto loss = losses::joint_loss(s(1.0), s(1.0), s(1.0), lw);
        CHECK(loss->value[0] == doctest::Approx(5.0));
    }
    SUBCASE("zero weights decouple") {
        LossWeights lw{0.0, 0.0, 4.0};
        auto loss = losses::joint_loss(s(0.7), s(0.4), s(0.9), lw);
        CHECK(loss->value[0] == doctest::Approx(0.4));
    }
    SUBCASE("hand value") {
        LossWeights lw;
        auto loss = losses::joint_loss(s(0.5), s(0.2), s(0.3), lw);
        CHECK(loss->value[0] == doctest::Approx(1.8));
    }
    SUBCASE("non-finite component raises divergence") {
        LossWeights lw;
        CHECK_THROWS_AS(
            losses::joint_loss(s(std::numeric_limits<double>::quiet_NaN()), s(0.0), s(0.0), lw),
            DivergenceError);
    }
    SUBCASE("disc totals") {
        CHECK(losses::disc_total_loss(s(1.0), s(0.5), 4.0)->value[0] == doctest::Approx(3.0));
        CHECK(losses::disc_total_loss(s(0.9), s(0.5), 0.0)->value[0] == doctest::Approx(0.9));
        CHECK(losses::disc_total_loss(s(0.9), s(0.0), 4.0)->value[0] == doctest::Approx(0.9));
    }
}

TEST_CASE("mean entropy oracle values") {
    SUBCASE("uniform scores give exactly 1") {
        Tensor t({4, 2, 2}, 0.25);
        CHECK(mean_entropy(t) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("one-hot scores give exactly 0") {
        Tensor t({3, 2, 2});
        for (int p = 0; p < 4; ++p) t[p] = 1.0;
        CHECK(mean_entropy(t) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("hand value for l=2, r=(0.9,0.1)") {
        Tensor t({2, 1, 1});
        t[0] = 0.9;
        t[1] = 0.1;
        const double expect = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)) / std::log(2.0);
        CHECK(mean_entropy(t) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(mean_entropy(t) == doctest::Approx(0.4690).epsilon(1e-4));
    }
    SUBCASE("permutation invariance and bounds") {
        RngStream rng(9);
        auto scores = random_scores({1, 4, 3, 3}, rng, true);
        Tensor t = scores->value;
        t.reshape({4, 3, 3});
        Tensor perm({4, 3, 3});
        const int order[4] = {2, 0, 3, 1};
        for (int c = 0; c < 4; ++c)
            for (int p = 0; p < 9; ++p) perm[c * 9 + p] = t[order[c] * 9 + p];
        CHECK(mean_entropy(t) == doctest::Approx(mean_entropy(perm)).epsilon(1e-12));
        CHECK(mean_entropy(t) >= 0.0);
        CHECK(mean_entropy(t) <= 1.0);
    }
}

TEST_CASE("loss gradients match central finite differences on random inputs") {
    RngStream rng(214);
    const int l = 3;
    const double step = 1e-4, tol = 1e-3;  // the documented gate

    auto scores = random_scores({2, l, 8, 8}, rng, true);
    auto labels = random_labels(2, 8, 8, l, rng, 0.05);

    ClassWeights cw{{1.5, 0.7, 1.2}, 4.0};
    CHECK(gradcheck([&] { return losses::weighted_ce(scores, labels, cw); }, scores, step) < tol);
    CHECK(gradcheck([&] { return losses::focal_loss(scores, labels, 2.0); }, scores, step) < tol);
    CHECK(gradcheck([&] { return losses::focal_loss(scores, labels, 0.0); }, scores, step) < tol);

    auto p1 = random_scores({2, 1, 8, 8}, rng, false);
    auto p2 = random_scores({2, 1, 8, 8}, rng, false);
    CHECK(gradcheck([&] { return losses::adv_gen_loss(p1); }, p1, step) < tol);
    auto adv = [&] { return losses::adv_disc_loss(p1, p2); };
    CHECK(gradcheck(adv, p1, step) < tol);
    CHECK(gradcheck(adv, p2, step) < tol);
    auto reg = [&] { return losses::disc_reg_loss(p1, p2); };
    CHECK(gradcheck(reg, p1, step) < tol);
    CHECK(gradcheck(reg, p2, step) < tol);
}
