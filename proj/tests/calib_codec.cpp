// Pilot run for codec training: reports loss trajectory, PSNR and latent
// statistics so test thresholds can be set from evidence. Not a ctest.
#include <cstdio>
#include <synthval/codec.hpp>
#include <synthval/rng.hpp>
#include <synthval/tensor.hpp>
#include <synthval/toy.hpp>

using namespace synthval;

int main(int argc, char** argv) {
    const int n_normal = 160, n_abnormal = 160, size = 32;
    int steps = argc > 1 ? std::atoi(argv[1]) : 2000;

    std::vector<float> all;
    for (int i = 0; i < n_normal; ++i) {
        Rng rng = Rng::substream(99, "calib-normal", (uint64_t)i);
        const auto im = toy::generate_normal(rng, size);
        all.insert(all.end(), im.begin(), im.end());
    }
    for (int i = 0; i < n_abnormal; ++i) {
        Rng rng = Rng::substream(99, "calib-abnormal", (uint64_t)i);
        const auto spec = toy::spec_from_index(i % toy::kSpecCount);
        const auto base = toy::generate_normal(rng, size);
        const auto mask = toy::sample_mask(rng, spec, size);
        const auto im = toy::render_abnormality(base, mask, size, spec, rng);
        all.insert(all.end(), im.begin(), im.end());
    }
    const Tensor images =
        Tensor::from_data({n_normal + n_abnormal, size, size, 3}, std::move(all));

    Rng init(3);
    codec::Codec model({}, init);
    std::printf("params: %lld\n", (long long)model.parameter_count());

    codec::CodecTrainConfig cfg;
    cfg.steps = steps;
    const auto stats = codec::train_codec(model, images, cfg);

    for (size_t i = 0; i < stats.losses.size(); i += stats.losses.size() / 20) {
        std::printf("step %5zu  loss %.6f\n", i, (double)stats.losses[i]);
    }
    std::printf("final loss %.6f (initial %.6f)\n", stats.final_loss, stats.initial_loss);
    std::printf("train PSNR %.2f dB\n", stats.psnr_db);

    const auto named = model.named_buffers();
    for (const auto& [name, t] : named) {
        if (name == "latent_mean" || name == "latent_std") {
            std::printf("%s:", name.c_str());
            for (int c = 0; c < t.size(); ++c) std::printf(" %.4f", (double)t.values()[(size_t)c]);
            std::printf("\n");
        }
    }

    // Round-trip through normalized space must agree with plain decode.
    autograd::NoGradGuard ng;
    std::vector<int> idx{0, 1, 2, 3};
    const Tensor probe = take_rows(images, idx);
    const Tensor zn = model.encode_norm(probe);
    double zmin = 1e9, zmax = -1e9;
    for (int64_t i = 0; i < zn.size(); ++i) {
        zmin = std::min(zmin, (double)zn.values()[(size_t)i]);
        zmax = std::max(zmax, (double)zn.values()[(size_t)i]);
    }
    std::printf("normalized latent range [%.3f, %.3f]\n", zmin, zmax);
    return 0;
}
