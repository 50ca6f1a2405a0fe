#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "ovlm/kernels.hpp"

using namespace ovlm::kernels;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-2.f, 2.f);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

const size_t kSizes[] = {1, 3, 7, 8, 9, 16, 33, 100, 1024};

}  // namespace

TEST_CASE("dispatched kernels match the scalar reference") {
    for (size_t n : kSizes) {
        auto a = random_vec(n, n);
        auto b = random_vec(n, n + 1000);

        CHECK(dot(a.data(), b.data(), n) ==
              doctest::Approx(scalar::dot(a.data(), b.data(), n)).epsilon(1e-4));
        CHECK(reduce_sum(a.data(), n) ==
              doctest::Approx(scalar::reduce_sum(a.data(), n)).epsilon(1e-4));
        CHECK(reduce_max(a.data(), n) == scalar::reduce_max(a.data(), n));

        std::vector<float> y1 = a, y2 = a;
        axpy(y1.data(), 0.37f, b.data(), n);
        scalar::axpy(y2.data(), 0.37f, b.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-5));

        std::vector<float> o1(n), o2(n);
        vadd(o1.data(), a.data(), b.data(), n);
        scalar::vadd(o2.data(), a.data(), b.data(), n);
        CHECK(o1 == o2);
        vmul(o1.data(), a.data(), b.data(), n);
        scalar::vmul(o2.data(), a.data(), b.data(), n);
        CHECK(o1 == o2);

        y1 = a;
        y2 = a;
        vscale(y1.data(), -1.25f, n);
        scalar::vscale(y2.data(), -1.25f, n);
        CHECK(y1 == y2);
    }
}

TEST_CASE("avx2 variant agrees with scalar when available") {
    if (!avx2::available()) return;
    for (size_t n : kSizes) {
        auto a = random_vec(n, 7 * n + 1);
        auto b = random_vec(n, 9 * n + 2);
        CHECK(avx2::dot(a.data(), b.data(), n) ==
              doctest::Approx(scalar::dot(a.data(), b.data(), n)).epsilon(1e-4));
        CHECK(avx2::reduce_max(a.data(), n) == scalar::reduce_max(a.data(), n));
        CHECK(avx2::reduce_sum(a.data(), n) ==
              doctest::Approx(scalar::reduce_sum(a.data(), n)).epsilon(1e-4));
    }
}

TEST_CASE("backend name is reported") {
    const std::string name = active_backend();
    CHECK((name == "avx2" || name == "scalar"));
}
