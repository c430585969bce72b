#include <catch2/catch_amalgamated.hpp>

#include "rkfac/eig.hpp"
#include "rkfac/matrix.hpp"
#include "rkfac/qr.hpp"
#include "rkfac/rng.hpp"
#include "test_util.hpp"

using namespace rkfac;

TEST_CASE("sample_gaussian is deterministic per seed") {
    RngState a(7), b(7);
    DenseMatrix x = sample_gaussian(a, 3, 2);
    DenseMatrix y = sample_gaussian(b, 3, 2);
    REQUIRE(max_abs_diff(x, y) == 0.0);

    RngState c(8);
    DenseMatrix z = sample_gaussian(c, 3, 2);
    REQUIRE(max_abs_diff(x, z) > 0.0);
}

TEST_CASE("sample_gaussian moments") {
    RngState rng(7);
    DenseMatrix x = sample_gaussian(rng, 1000, 1);
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x.data()[i];
    mean /= 1000.0;
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        var += (x.data()[i] - mean) * (x.data()[i] - mean);
    var /= 999.0;
    REQUIRE(std::abs(mean) <= 0.1);
    REQUIRE(var >= 0.9);
    REQUIRE(var <= 1.1);
}

TEST_CASE("rng substreams are independent and reproducible") {
    RngState base(42);
    RngState s1 = base.substream(3, 1);
    RngState s2 = base.substream(3, 2);
    RngState s1_again = base.substream(3, 1);
    REQUIRE(s1.next_u64() != s2.next_u64());
    REQUIRE(s1_again.seed == s1.seed);
}

TEST_CASE("qr_thin identity") {
    QrResult qr = qr_thin(DenseMatrix::identity(3));
    REQUIRE(max_abs_diff(qr.q, DenseMatrix::identity(3)) <= 1e-14);
    REQUIRE(max_abs_diff(qr.r, DenseMatrix::identity(3)) <= 1e-14);
}

TEST_CASE("qr_thin rank-deficient hand case") {
    // [[3,0],[4,0],[0,0]]: first Householder step is hand-computable.
    DenseMatrix x(3, 2, std::vector<double>{3, 0, 4, 0, 0, 0});
    QrResult qr = qr_thin(x);
    REQUIRE(std::abs(std::abs(qr.r(0, 0)) - 5.0) <= 1e-12);
    const double sign = qr.r(0, 0) > 0 ? 1.0 : -1.0;
    REQUIRE(qr.q(0, 0) * sign == Catch::Approx(0.6).margin(1e-12));
    REQUIRE(qr.q(1, 0) * sign == Catch::Approx(0.8).margin(1e-12));
    REQUIRE(std::abs(qr.q(2, 0)) <= 1e-12);

    // Gram-Schmidt oracle on the nonzero column agrees up to sign.
    DenseMatrix col(3, 1, std::vector<double>{3, 4, 0});
    DenseMatrix gs = test_util::gram_schmidt(col);
    for (std::size_t i = 0; i < 3; ++i)
        REQUIRE(std::abs(std::abs(qr.q(i, 0)) - std::abs(gs(i, 0))) <= 1e-12);

    // Q stays orthonormal and QR = X despite the zero column.
    REQUIRE(max_abs_diff(matmul_at_b(qr.q, qr.q), DenseMatrix::identity(2)) <= 1e-12);
    REQUIRE(max_abs_diff(matmul(qr.q, qr.r), x) <= 1e-12);

    REQUIRE_THROWS_AS(qr_thin(x, /*strict=*/true), RankDeficient);
}

TEST_CASE("qr_thin reconstruction and orthonormality on random input") {
    RngState rng(1);
    DenseMatrix x = sample_gaussian(rng, 50, 10);
    QrResult qr = qr_thin(x);
    REQUIRE(frobenius_norm(subtract(matmul(qr.q, qr.r), x)) <=
            1e-12 * frobenius_norm(x));
    REQUIRE(max_abs_diff(matmul_at_b(qr.q, qr.q), DenseMatrix::identity(10)) <= 1e-10);
    for (std::size_t i = 0; i < qr.r.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) REQUIRE(qr.r(i, j) == 0.0);
}

TEST_CASE("qr_thin property sweep over seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngState rng(seed);
        DenseMatrix x = sample_gaussian(rng, 20, 6);
        QrResult qr = qr_thin(x);
        REQUIRE(max_abs_diff(matmul_at_b(qr.q, qr.q), DenseMatrix::identity(6)) <=
                1e-10);
        REQUIRE(frobenius_norm(subtract(matmul(qr.q, qr.r), x)) <=
                1e-10 * frobenius_norm(x));
    }
}

TEST_CASE("svd_small diagonal and zero cases") {
    DenseMatrix d3(3, 3);
    d3(0, 0) = 3;
    d3(1, 1) = 2;
    d3(2, 2) = 1;
    SvdResult s = svd_small(d3);
    REQUIRE(s.s[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(s.s[1] == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(s.s[2] == Catch::Approx(1.0).margin(1e-12));

    SvdResult z = svd_small(DenseMatrix(4, 2));
    REQUIRE(z.s == std::vector<double>{0.0, 0.0});
    // completed basis still orthonormal
    REQUIRE(max_abs_diff(matmul_at_b(z.u, z.u), DenseMatrix::identity(2)) <= 1e-12);
}

TEST_CASE("svd_small matches Gram-matrix oracle on random input") {
    RngState rng(2);
    DenseMatrix x = sample_gaussian(rng, 30, 8);
    SvdResult s = svd_small(x);

    SymEigResult gram = sym_eig(matmul_at_b(x, x));
    for (std::size_t i = 0; i < 8; ++i) {
        REQUIRE(std::abs(s.s[i] - std::sqrt(std::max(0.0, gram.d[i]))) <= 1e-8);
        if (i) REQUIRE(s.s[i] <= s.s[i - 1] + 1e-12);
    }

    DenseMatrix recon = matmul_a_bt(scale_cols(s.u, s.s), s.v);
    REQUIRE(frobenius_norm(subtract(recon, x)) <= 1e-10 * frobenius_norm(x));
    REQUIRE(max_abs_diff(matmul_at_b(s.u, s.u), DenseMatrix::identity(8)) <= 1e-10);
    REQUIRE(max_abs_diff(matmul_at_b(s.v, s.v), DenseMatrix::identity(8)) <= 1e-10);
}

TEST_CASE("svd_small wide input transposes correctly") {
    RngState rng(5);
    DenseMatrix x = sample_gaussian(rng, 4, 9);
    SvdResult s = svd_small(x);
    REQUIRE(s.u.rows() == 4);
    REQUIRE(s.v.rows() == 9);
    DenseMatrix recon = matmul_a_bt(scale_cols(s.u, s.s), s.v);
    REQUIRE(frobenius_norm(subtract(recon, x)) <= 1e-10 * frobenius_norm(x));
}

TEST_CASE("sym_eig identity and 2x2 closed form") {
    SymEigResult id = sym_eig(DenseMatrix::identity(5));
    for (double v : id.d) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));

    DenseMatrix s(2, 2, std::vector<double>{2, 1, 1, 2});
    SymEigResult e = sym_eig(s);
    REQUIRE(e.d[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(e.d[1] == Catch::Approx(1.0).margin(1e-12));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    REQUIRE(std::abs(std::abs(e.p(0, 0)) - inv_sqrt2) <= 1e-12);
    REQUIRE(std::abs(e.p(0, 0) - e.p(1, 0)) <= 1e-12);   // (1,1)/sqrt(2) up to sign
    REQUIRE(std::abs(e.p(0, 1) + e.p(1, 1)) <= 1e-12);   // (1,-1)/sqrt(2) up to sign
}

TEST_CASE("sym_eig rank-1 outer product") {
    RngState rng(11);
    DenseMatrix v = sample_gaussian(rng, 10, 1);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < 10; ++i) norm2 += v(i, 0) * v(i, 0);
    SymEigResult e = sym_eig(matmul_a_bt(v, v));
    REQUIRE(e.d[0] == Catch::Approx(norm2).margin(1e-10));
    for (std::size_t i = 1; i < 10; ++i) REQUIRE(std::abs(e.d[i]) <= 1e-10 * norm2);
}

TEST_CASE("sym_eig reconstruction on random symmetric input up to size 300") {
    for (std::size_t n : {30, 120, 300}) {
        RngState rng(n);
        DenseMatrix g = sample_gaussian(rng, n, n);
        DenseMatrix s = matmul_a_bt(g, g);
        symmetrize_in_place(s);
        SymEigResult e = sym_eig(s);
        DenseMatrix recon = matmul_a_bt(scale_cols(e.p, e.d), e.p);
        REQUIRE(frobenius_norm(subtract(recon, s)) <= 1e-9 * frobenius_norm(s));
        REQUIRE(max_abs_diff(matmul_at_b(e.p, e.p), DenseMatrix::identity(n)) <= 1e-10);
        // PSD input: tiny negatives only
        REQUIRE(e.d.back() >= -1e-9 * e.d.front());
        for (std::size_t i = 1; i < n; ++i) REQUIRE(e.d[i] <= e.d[i - 1] + 1e-12);
    }
}

TEST_CASE("sym_eig rejects gross asymmetry") {
    DenseMatrix s(2, 2, std::vector<double>{1, 1, 0, 1});
    REQUIRE_THROWS_AS(sym_eig(s), DimensionMismatch);
}
