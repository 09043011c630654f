#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "mmreid/kernels.hpp"
#include "mmreid/rng.hpp"

using namespace mmreid;

namespace {

std::vector<double> random_vec(int n, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial and parallel matmul variants are bit-identical") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + rng.uniform_int(33);
        const int k = 1 + rng.uniform_int(33);
        const int n = 1 + rng.uniform_int(33);
        auto a = random_vec(m * k, rng);
        auto b_nn = random_vec(k * n, rng);
        auto b_nt = random_vec(n * k, rng);
        auto a_tn = random_vec(k * m, rng);

        std::vector<double> c1(static_cast<std::size_t>(m) * n), c2(c1.size());

        kernels::matmul_nn_serial(a.data(), b_nn.data(), c1.data(), m, k, n);
        kernels::matmul_nn_parallel(a.data(), b_nn.data(), c2.data(), m, k, n);
        CHECK(bitwise_equal(c1, c2));

        kernels::matmul_nt_serial(a.data(), b_nt.data(), c1.data(), m, k, n);
        kernels::matmul_nt_parallel(a.data(), b_nt.data(), c2.data(), m, k, n);
        CHECK(bitwise_equal(c1, c2));

        kernels::matmul_tn_serial(a_tn.data(), b_nn.data(), c1.data(), m, k, n);
        kernels::matmul_tn_parallel(a_tn.data(), b_nn.data(), c2.data(), m, k, n);
        CHECK(bitwise_equal(c1, c2));
    }
}

TEST_CASE("accumulating matmul adds onto existing output") {
    Rng rng(5);
    const int m = 4, k = 3, n = 5;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> base = random_vec(m * n, rng);
    std::vector<double> fresh(static_cast<std::size_t>(m) * n);
    kernels::matmul_nn(a.data(), b.data(), fresh.data(), m, k, n, false);
    std::vector<double> acc = base;
    kernels::matmul_nn(a.data(), b.data(), acc.data(), m, k, n, true);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        CHECK(acc[i] == doctest::Approx(base[i] + fresh[i]).epsilon(1e-15));
    }
}

TEST_CASE("serial and parallel softmax / layer norm are bit-identical") {
    Rng rng(77);
    for (int trial = 0; trial < 6; ++trial) {
        const int rows = 1 + rng.uniform_int(40);
        const int cols = 1 + rng.uniform_int(40);
        auto x = random_vec(rows * cols, rng);
        std::vector<double> y1(x.size()), y2(x.size());
        kernels::softmax_rows_serial(x.data(), y1.data(), rows, cols);
        kernels::softmax_rows_parallel(x.data(), y2.data(), rows, cols);
        CHECK(bitwise_equal(y1, y2));

        auto gamma = random_vec(cols, rng);
        auto beta = random_vec(cols, rng);
        std::vector<double> h1(x.size()), h2(x.size());
        std::vector<double> s1(static_cast<std::size_t>(rows)), s2(s1.size());
        kernels::layer_norm_rows_serial(x.data(), gamma.data(), beta.data(), y1.data(),
                                        h1.data(), s1.data(), rows, cols, 1e-5);
        kernels::layer_norm_rows_parallel(x.data(), gamma.data(), beta.data(), y2.data(),
                                          h2.data(), s2.data(), rows, cols, 1e-5);
        CHECK(bitwise_equal(y1, y2));
        CHECK(bitwise_equal(h1, h2));
        CHECK(bitwise_equal(s1, s2));
    }
}

TEST_CASE("thread count is clamped and dispatch stays deterministic") {
    const int original = kernels::thread_count();
    kernels::set_thread_count(1);
    CHECK(kernels::thread_count() == 1);
    Rng rng(9);
    const int m = 16, k = 16, n = 16;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> c1(static_cast<std::size_t>(m) * n), c2(c1.size());
    kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n);
    kernels::set_thread_count(8);
    kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bitwise_equal(c1, c2));
    kernels::set_thread_count(original);
}
