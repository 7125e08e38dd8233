#include <doctest.h>

#include <filesystem>

#include <synthval/checkpoint.hpp>
#include <synthval/common.hpp>
#include <synthval/nn.hpp>
#include <synthval/rng.hpp>

using namespace synthval;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / (std::string("synthval_ckpt_test_") + name);
}

class TwoConv : public nn::Module {
public:
    explicit TwoConv(Rng& rng) : c1_(2, 4, 3, 1, rng), c2_(4, 2, 1, 0, rng) {
        register_module("c1", c1_);
        register_module("c2", c2_);
        Tensor stats = Tensor::zeros({4});
        rng.fill_uniform(stats.raw(), -1.0f, 1.0f);
        stats_ = register_buffer("stats", stats);
    }
    Tensor forward(const Tensor& x) const { return c2_.forward(silu(c1_.forward(x))); }

private:
    nn::Conv2d c1_, c2_;
    Tensor stats_;
};

}  // namespace

TEST_CASE("round trip preserves values, shapes and strings") {
    ckpt::Checkpoint c;
    c.put_f32("alpha", {2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
    c.put_string("meta/kind", "unit-test");
    const fs::path p = temp_file("roundtrip.bin");
    c.save(p);

    ckpt::Checkpoint r = ckpt::Checkpoint::load(p);
    CHECK(r.has("alpha"));
    CHECK(r.shape("alpha") == Shape{2, 3});
    CHECK(r.f32("alpha") == std::vector<float>{1, 2, 3, 4, 5, 6});
    CHECK(r.str("meta/kind") == "unit-test");
    CHECK_THROWS_AS(r.f32("missing"), MissingArtifactError);
    fs::remove(p);
}

TEST_CASE("load-save round trip is byte identical") {
    Rng rng(7);
    TwoConv m(rng);
    const fs::path p1 = temp_file("bytes1.bin");
    const fs::path p2 = temp_file("bytes2.bin");
    ckpt::save_module(p1, m, {{"epoch", "3"}, {"domain", "unit"}});

    ckpt::Checkpoint loaded = ckpt::Checkpoint::load(p1);
    loaded.save(p2);
    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
    CHECK(file_fingerprint(p1) == file_fingerprint(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("module state restores exactly") {
    Rng rng(8);
    TwoConv a(rng), b(rng);  // b gets different random weights
    const fs::path p = temp_file("module.bin");
    ckpt::save_module(p, a);
    ckpt::load_module(p, b);
    auto sa = a.named_state(), sb = b.named_state();
    REQUIRE(sa.size() == sb.size());
    for (size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].first == sb[i].first);
        const auto va = sa[i].second.values(), vb = sb[i].second.values();
        REQUIRE(va.size() == vb.size());
        for (size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
    }
    fs::remove(p);
}

TEST_CASE("mismatched module shapes are rejected") {
    Rng rng(9);
    TwoConv m(rng);
    ckpt::Checkpoint c;
    c.put_f32("state/c1.w", {1}, std::vector<float>{0.0f});
    CHECK_THROWS(ckpt::load_module_state(c, m));
}

TEST_CASE("corrupt containers are rejected") {
    const fs::path p = temp_file("corrupt.bin");
    write_text_file(p, "definitely not a checkpoint");
    CHECK_THROWS(ckpt::Checkpoint::load(p));
    fs::remove(p);
    CHECK_THROWS_AS(ckpt::Checkpoint::load(temp_file("nonexistent.bin")), MissingArtifactError);
}
