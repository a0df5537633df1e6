#include <doctest.h>

#include <Eigen/SVD>

#include "aada/layers.hpp"
#include "aada/ops.hpp"
#include "test_util.hpp"

using namespace aada;
using namespace aada::nn;
using aada::testutil::gradcheck;
using aada::testutil::random_tensor;

namespace {

// reduce any tensor to a scalar with a fixed random projection so that the
// op's full Jacobian is exercised by one backward pass
Var project(const Var& y, const Tensor& proj) {
    double v = 0.0;
    for (int64_t i = 0; i < y->value.size(); ++i) v += proj[i] * y->value[i];
    return make_node(Tensor::scalar(v), {y}, [&proj](Node& n) {
        auto& yi = n.inputs[0];
        if (!yi->needs_grad) return;
        Tensor& dy = yi->ensure_grad();
        for (int64_t i = 0; i < dy.size(); ++i) dy[i] += n.grad[0] * proj[i];
    });
}

}  // namespace

TEST_CASE("conv2d forward matches direct computation") {
    RngStream rng(7);
    auto x = leaf(random_tensor({1, 2, 5, 5}, rng));
    auto w = leaf(random_tensor({3, 2, 3, 3}, rng));
    auto b = leaf(random_tensor({3}, rng));
    auto y = conv2d(x, w, b, 1, 1);
    REQUIRE(y->value.shape() == std::vector<int>({1, 3, 5, 5}));

    // direct evaluation at one output location
    const int co = 1, oh = 2, ow = 3;
    double expect = b->value[co];
    for (int ci = 0; ci < 2; ++ci)
        for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
                const int ih = oh - 1 + di, iw = ow - 1 + dj;
                if (ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
                expect += w->value[((co * 2 + ci) * 3 + di) * 3 + dj] *
                          x->value[(ci * 5 + ih) * 5 + iw];
            }
    CHECK(y->value[(co * 5 + oh) * 5 + ow] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("conv2d gradients vs finite differences") {
    RngStream rng(11);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 0}, std::pair{2, 1}}) {
        auto x = leaf(random_tensor({2, 3, 6, 6}, rng));
        auto w = leaf(random_tensor({4, 3, 3, 3}, rng));
        auto b = leaf(random_tensor({4}, rng));
        const int ho = conv_out_size(6, 3, stride, pad);
        Tensor proj = random_tensor({2, 4, ho, ho}, rng);
        auto build = [&] { return project(conv2d(x, w, b, stride, pad), proj); };
        CHECK(gradcheck(build, x) < 1e-6);
        CHECK(gradcheck(build, w) < 1e-6);
        CHECK(gradcheck(build, b) < 1e-6);
    }
}

TEST_CASE("depthwise_conv2d gradients") {
    RngStream rng(13);
    auto x = leaf(random_tensor({2, 3, 6, 6}, rng));
    auto w = leaf(random_tensor({3, 3, 3}, rng));
    auto b = leaf(random_tensor({3}, rng));
    Tensor proj = random_tensor({2, 3, 6, 6}, rng);
    auto build = [&] { return project(depthwise_conv2d(x, w, b, 1, 1), proj); };
    CHECK(gradcheck(build, x) < 1e-6);
    CHECK(gradcheck(build, w) < 1e-6);
    CHECK(gradcheck(build, b) < 1e-6);
}

TEST_CASE("conv2d_transpose doubles spatial size and matches finite differences") {
    RngStream rng(17);
    auto x = leaf(random_tensor({2, 3, 5, 5}, rng));
    auto w = leaf(random_tensor({3, 2, 4, 4}, rng));
    auto b = leaf(random_tensor({2}, rng));
    auto y = conv2d_transpose(x, w, b, 2, 1);
    REQUIRE(y->value.shape() == std::vector<int>({2, 2, 10, 10}));

    Tensor proj = random_tensor({2, 2, 10, 10}, rng);
    auto build = [&] { return project(conv2d_transpose(x, w, b, 2, 1), proj); };
    CHECK(gradcheck(build, x) < 1e-6);
    CHECK(gradcheck(build, w) < 1e-6);
    CHECK(gradcheck(build, b) < 1e-6);
}

TEST_CASE("maxpool2d halves even inputs and routes gradient to the argmax") {
    RngStream rng(19);
    auto x = leaf(random_tensor({1, 2, 8, 8}, rng));
    auto y = maxpool2d(x, 3, 2, 1);
    REQUIRE(y->value.shape() == std::vector<int>({1, 2, 4, 4}));

    Tensor proj = random_tensor({1, 2, 4, 4}, rng);
    auto build = [&] { return project(maxpool2d(x, 3, 2, 1), proj); };
    CHECK(gradcheck(build, x, 1e-7) < 1e-5);  // tiny step keeps argmax stable
}

TEST_CASE("activation and shape op gradients") {
    RngStream rng(23);
    auto x = leaf(random_tensor({2, 3, 4, 4}, rng));
    Tensor proj = random_tensor({2, 3, 4, 4}, rng);

    CHECK(gradcheck([&] { return project(relu(x), proj); }, x, 1e-7) < 1e-5);
    CHECK(gradcheck([&] { return project(leaky_relu(x, 0.1), proj); }, x, 1e-7) < 1e-5);
    CHECK(gradcheck([&] { return project(sigmoid(x), proj); }, x) < 1e-6);
    CHECK(gradcheck([&] { return project(softmax_channels(x), proj); }, x) < 1e-6);

    Tensor proj_up = random_tensor({2, 3, 8, 8}, rng);
    CHECK(gradcheck([&] { return project(upsample_nearest2(x), proj_up); }, x) < 1e-6);

    auto x2 = leaf(random_tensor({2, 2, 4, 4}, rng));
    Tensor proj_cat = random_tensor({2, 5, 4, 4}, rng);
    auto build_cat = [&] { return project(concat_channels(x, x2), proj_cat); };
    CHECK(gradcheck(build_cat, x) < 1e-6);
    CHECK(gradcheck(build_cat, x2) < 1e-6);
}

TEST_CASE("softmax output sums to one per pixel") {
    RngStream rng(29);
    auto x = leaf(random_tensor({2, 5, 3, 3}, rng, -4.0, 4.0));
    auto y = softmax_channels(x);
    for (int b = 0; b < 2; ++b)
        for (int p = 0; p < 9; ++p) {
            double s = 0.0;
            for (int c = 0; c < 5; ++c) s += y->value[(b * 5 + c) * 9 + p];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("batch_norm training mode normalizes and backprops through statistics") {
    RngStream rng(31);
    auto x = leaf(random_tensor({2, 3, 4, 4}, rng));
    auto gamma = leaf(Tensor({3}, 1.0));
    auto beta = leaf(Tensor({3}));
    Tensor rm({3}), rv({3}, 1.0);

    auto y = batch_norm(x, gamma, beta, rm, rv, true, true, 0.1, 1e-5);
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int p = 0; p < 16; ++p) mean += y->value[(b * 3 + c) * 16 + p];
        mean /= 32.0;
        for (int b = 0; b < 2; ++b)
            for (int p = 0; p < 16; ++p) {
                const double d = y->value[(b * 3 + c) * 16 + p] - mean;
                var += d * d;
            }
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(var / 32.0 == doctest::Approx(1.0).epsilon(1e-3));  // eps-shrunk
    }

    Tensor proj = random_tensor({2, 3, 4, 4}, rng);
    Tensor rm2({3}), rv2({3}, 1.0);
    auto build = [&] {
        Tensor rmc = rm2, rvc = rv2;  // keep running stats untouched across FD evals
        return project(batch_norm(x, gamma, beta, rmc, rvc, true, true, 0.1, 1e-5), proj);
    };
    CHECK(gradcheck(build, x) < 1e-6);
    CHECK(gradcheck(build, gamma) < 1e-6);
    CHECK(gradcheck(build, beta) < 1e-6);
}

TEST_CASE("batch_norm eval mode uses running statistics") {
    RngStream rng(37);
    auto x = leaf(random_tensor({1, 2, 3, 3}, rng));
    auto gamma = leaf(Tensor({2}, 2.0));
    auto beta = leaf(Tensor({2}, 0.5));
    Tensor rm({2});
    Tensor rv({2}, 1.0);
    rm[0] = 0.3;
    rm[1] = -0.2;
    rv[0] = 4.0;
    rv[1] = 0.25;
    auto y = batch_norm(x, gamma, beta, rm, rv, false, false, 0.1, 1e-5);
    const double expect = 2.0 * (x->value[0] - 0.3) / std::sqrt(4.0 + 1e-5) + 0.5;
    CHECK(y->value[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("spectral normalization converges to unit top singular value") {
    RngStream rng(41);
    // matrix with known top singular value 3
    Tensor w({4, 4});
    w[0 * 4 + 0] = 3.0;
    w[1 * 4 + 1] = 1.5;
    w[2 * 4 + 2] = 0.5;
    w[3 * 4 + 3] = 0.1;
    Tensor u({4}), v({4});
    for (int i = 0; i < 4; ++i) u[i] = rng.normal(0.0, 1.0);

    Tensor out = w;
    for (int it = 0; it < 8; ++it) out = spectral_normalize(w, u, v, true);

    Eigen::Map<Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> m(out.data());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    CHECK(svd.singularValues()(0) == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("spectral normalization fixed point and zero matrix") {
    RngStream rng(43);
    Tensor w({3, 3});
    w[0] = 1.0;  // top singular value exactly 1
    w[4] = 0.3;
    w[8] = 0.2;
    Tensor u({3}), v({3});
    for (int i = 0; i < 3; ++i) u[i] = rng.normal(0.0, 1.0);
    Tensor out = w;
    for (int it = 0; it < 30; ++it) out = spectral_normalize(w, u, v, true);
    for (int i = 0; i < 9; ++i) CHECK(out[i] == doctest::Approx(w[i]).epsilon(1e-3));

    Tensor z({3, 3});
    Tensor uz({3}, 1.0), vz({3});
    Tensor outz = spectral_normalize(z, uz, vz, true);
    for (int i = 0; i < 9; ++i) CHECK(outz[i] == 0.0);
}

TEST_CASE("spectral_norm_apply gradient vs finite differences") {
    RngStream rng(47);
    auto w = leaf(random_tensor({3, 4}, rng));
    Tensor u({3}), v({4});
    for (int i = 0; i < 3; ++i) u[i] = rng.normal(0.0, 1.0);
    // prime the estimates, then check the graph built with frozen estimates
    spectral_normalize(w->value, u, v, true);
    Tensor proj = random_tensor({3, 4}, rng);
    auto build = [&] { return project(spectral_norm_apply(w, u, v, false), proj); };
    CHECK(gradcheck(build, w) < 1e-6);
}

TEST_CASE("weighted_sum combines scalars") {
    auto a = leaf(Tensor::scalar(1.0));
    auto b = leaf(Tensor::scalar(2.0));
    auto y = weighted_sum({a, b}, {2.0, 3.0});
    CHECK(y->value[0] == doctest::Approx(8.0));
    backward(y);
    CHECK(a->grad[0] == doctest::Approx(2.0));
    CHECK(b->grad[0] == doctest::Approx(3.0));
}
