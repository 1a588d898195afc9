// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "malk/adapters/lora.hpp"
#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"
#include "support/grad_cases.hpp"

namespace malk {
namespace {

Matrix run(AdapterLayer& layer, const Matrix& x) {
    ad::Tape tape;
    ForwardContext ctx{tape};
    return layer.forward(ctx, tape.constant(x), "s").y.value();
}

TEST(Lora, FreshLayerEqualsBase) {
    Rng rng(1);
    const Matrix w = uniform_matrix(5, 7, -1, 1, rng);
    const Matrix x = uniform_matrix(4, 7, -1, 1, rng);
    for (bool asym : {false, true}) {
        LoraLayer layer(w, {3, 0.0, asym, 0.0}, rng);
        EXPECT_TRUE(run(layer, x).identical(matmul_nt(x, w)));
        EXPECT_EQ(max_abs(merge_delta(layer)), 0.0);
    }
}

TEST(Lora, FullRankMatchesDense) {
    Rng rng(2);
    const Matrix w = uniform_matrix(4, 4, -1, 1, rng);
    LoraLayer layer(w, {4, 4.0, false, 0.0}, rng);
    layer.b() = uniform_matrix(4, 4, -1, 1, rng);
    const Matrix x = uniform_matrix(6, 4, -1, 1, rng);
    const Matrix dense = matmul_nt(x, add(w, matmul(layer.b(), layer.a())));
    EXPECT_LT(max_abs_diff(run(layer, x), dense), 1e-12);
}

TEST(Lora, AlphaIsLinear) {
    Rng rng(3);
    const Matrix w = uniform_matrix(5, 6, -1, 1, rng);
    LoraLayer layer(w, {2, 3.0, false, 0.0}, rng);
    layer.b() = uniform_matrix(5, 2, -1, 1, rng);
    const Matrix x = uniform_matrix(3, 6, -1, 1, rng);
    const Matrix base = matmul_nt(x, w);
    const Matrix d1 = sub(run(layer, x), base);
    layer.set_alpha(6.0);
    const Matrix d2 = sub(run(layer, x), base);
    EXPECT_LT(max_abs_diff(d2, scale(d1, 2.0)), 1e-14);
}

TEST(Lora, DefaultAlphaAndScale) {
    Rng rng(4);
    LoraLayer plain(Matrix(3, 3), {2, 0.0, false, 0.0}, rng);
    EXPECT_DOUBLE_EQ(plain.alpha(), 4.0);
    EXPECT_DOUBLE_EQ(plain.scale(), 2.0);
    LoraLayer asym(Matrix(3, 3), {2, 0.0, true, 0.0}, rng);
    EXPECT_EQ(asym.effective_rank(), 4u);
    EXPECT_DOUBLE_EQ(asym.scale(), 2.0);
}

TEST(Lora, RankOneOuterProduct) {
    Rng rng(5);
    LoraLayer layer(Matrix(3, 4), {1, 1.0, false, 0.0}, rng);
    layer.a() = Matrix(1, 4);
    layer.a()(0, 0) = 1.0;
    layer.b() = Matrix(3, 1);
    layer.b()(0, 0) = 1.0;
    Matrix expect(3, 4);
    expect(0, 0) = 1.0;
    EXPECT_TRUE(merge_delta(layer).identical(expect));
}

TEST(Lora, ForwardMinusBaseEqualsMergedDelta) {
    Rng rng(6);
    const Matrix w = uniform_matrix(6, 5, -1, 1, rng);
    for (bool asym : {false, true}) {
        LoraLayer layer(w, {2, 0.0, asym, 0.0}, rng);
        layer.b() = uniform_matrix(6, layer.effective_rank(), -1, 1, rng);
        const Matrix x = uniform_matrix(4, 5, -1, 1, rng);
        const Matrix delta = sub(run(layer, x), matmul_nt(x, w));
        EXPECT_LT(max_abs_diff(delta, matmul_nt(x, merge_delta(layer))), 1e-12);
    }
}

TEST(Lora, AsymmetricFreezesA) {
    Rng rng(7);
    LoraLayer layer(uniform_matrix(3, 4, -1, 1, rng), {2, 0.0, true, 0.0}, rng);
    const auto params = layer.params("s");
    ASSERT_EQ(params.size(), 2u);
    EXPECT_FALSE(params[0].trainable);
    EXPECT_TRUE(params[1].trainable);
    ad::Tape tape;
    ForwardContext ctx{tape};
    const ad::Var y = layer.forward(ctx, tape.constant(uniform_matrix(2, 4, -1, 1, rng)), "s").y;
    const ad::GradientMap g = tape.backward(ad::sum_all(y));
    EXPECT_EQ(g.count("s.a"), 0u);
    EXPECT_EQ(g.count("s.b"), 1u);
}

TEST(Lora, DropoutOnlyOnAdapterBranch) {
    Rng rng(8);
    const Matrix w = uniform_matrix(3, 4, -1, 1, rng);
    LoraLayer layer(w, {2, 0.0, false, 0.5}, rng);
    const Matrix x = uniform_matrix(5, 4, -1, 1, rng);
    ad::Tape tape;
    Rng drop(1);
    ForwardContext ctx{tape, true, &drop};
    // b = 0, so even with dropout active the output is the undropped base.
    EXPECT_TRUE(layer.forward(ctx, tape.constant(x), "s").y.value().identical(matmul_nt(x, w)));
}

TEST(LoraParamCount, Formulas) {
    EXPECT_EQ(lora_param_count(4096, 4096, 64, false).trainable, 524288u);
    const ParamCount asym = lora_param_count(4096, 4096, 64, true);
    EXPECT_EQ(asym.trainable, 524288u);
    EXPECT_EQ(asym.frozen, 524288u);
    EXPECT_THROW(lora_param_count(4, 4, 0, false), InvalidInput);
}

TEST(Lora, ZeroRankRejected) {
    Rng rng(9);
    EXPECT_THROW(LoraLayer(Matrix(2, 2), {0, 0.0, false, 0.0}, rng), InvalidInput);
}

TEST(Lora, ShapeMismatch) {
    Rng rng(10);
    LoraLayer layer(Matrix(2, 3), {1, 0.0, false, 0.0}, rng);
    EXPECT_THROW(run(layer, Matrix(2, 4)), ShapeError);
}

TEST(Method, NamesRoundTrip) {
    for (Method m : {Method::Lora, Method::AsyLora, Method::Molora, Method::MoAsyLora, Method::Malora}) {
        EXPECT_EQ(parse_method(method_name(m)), m);
    }
    EXPECT_THROW(parse_method("dora"), ConfigError);
}

}  // namespace
}  // namespace malk
