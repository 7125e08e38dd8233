// Pilot run for diffusion training: reports the loss trajectory, wall time,
// prompt-controllability rate under the fixed probe, and inpainting locality
// so test thresholds can be set from evidence. Not a ctest.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <synthval/codec.hpp>
#include <synthval/dataset.hpp>
#include <synthval/diffusion.hpp>
#include <synthval/image.hpp>
#include <synthval/toy.hpp>

using namespace synthval;
namespace fs = std::filesystem;

static double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int main(int argc, char** argv) {
    const int steps = argc > 1 ? std::atoi(argv[1]) : 3000;  // 0 = reuse saved model
    const int trials = argc > 2 ? std::atoi(argv[2]) : 40;
    const float guidance = argc > 3 ? (float)std::atof(argv[3]) : 7.5f;
    const fs::path work = "/tmp/sv_pilot";
    fs::create_directories(work);

    const auto bank = cond::PromptBank::default_bank();

    // Dataset (cached on disk).
    const fs::path ds_dir = work / "ds";
    if (!fs::exists(ds_dir / "dataset.json")) {
        double t0 = now_s();
        data::build_dataset({}, bank, ds_dir.string());
        std::printf("built dataset in %.1f s\n", now_s() - t0);
    }
    const auto ds = data::load_dataset(ds_dir.string());

    // Codec (cached checkpoint).
    const fs::path codec_path = work / "codec.ckpt";
    if (!fs::exists(codec_path)) {
        const auto train_n = ds.select("train", false);
        const auto train_a = ds.select("train", true);
        auto recs = train_n;
        recs.insert(recs.end(), train_a.begin(), train_a.end());
        Tensor images = data::load_images(ds, recs);
        Rng init(3);
        codec::Codec model({}, init);
        codec::CodecTrainConfig ccfg;
        ccfg.steps = 1200;
        double t0 = now_s();
        auto stats = codec::train_codec(model, images, ccfg);
        std::printf("codec: %d steps in %.1f s, PSNR %.2f dB\n", ccfg.steps, now_s() - t0,
                    stats.psnr_db);
        codec::save_codec(codec_path.string(), model);
    }
    auto codec = codec::load_codec(codec_path.string());

    // Diffusion training (or reuse of the saved pilot model when steps == 0).
    const auto schedule = diff::NoiseSchedule::linear(1000, 1e-4, 0.01);
    std::unique_ptr<diff::Generator> gen;
    if (steps == 0) {
        gen = diff::load_generator((work / "gen.ckpt").string());
        std::printf("reusing saved generator; guidance=%.2f\n", (double)guidance);
    } else {
        diff::DiffusionTrainConfig dcfg;
        dcfg.steps = steps;
        diff::DiffusionTrainResult res;
        double t0 = now_s();
        gen = diff::train_diffusion(ds, *codec, bank, dcfg, schedule, &res);
        const double train_s = now_s() - t0;
        std::printf("diffusion: %d steps in %.1f s (%.1f ms/step)\n", steps, train_s,
                    1000.0 * train_s / std::max(1, steps));
        for (size_t i = 0; i < res.losses.size();
             i += std::max<size_t>(1, res.losses.size() / 24)) {
            std::printf("  step %5zu loss %.4f\n", i, (double)res.losses[i]);
        }
        std::printf("window means: first50 %.4f  last50 %.4f\n", (double)res.initial_window,
                    (double)res.final_window);
        diff::save_generator((work / "gen.ckpt").string(), *gen);
    }

    // Masked-term decomposition on a fixed eval batch: how much of the loss
    // is learnable signal vs the preservation noise floor.
    {
        autograd::NoGradGuard ng2;
        const auto train_a = ds.select("train", true);
        std::vector<const data::SampleRecord*> recs(train_a.begin(), train_a.begin() + 32);
        Tensor z0 = codec->encode_norm(data::load_images(ds, recs));
        Tensor zn = codec->encode_norm(data::load_base_images(ds, recs));
        Tensor ml = codec::downscale_mask(data::load_masks(ds, recs), codec->config().f);
        Rng erng(123);
        std::vector<int> ts(32);
        for (int b = 0; b < 32; ++b) ts[b] = 1 + (b * 999) / 31;
        std::vector<float> nv((size_t)z0.size());
        erng.fill_normal(nv);
        Tensor eps = Tensor::from_data(z0.shape(), std::move(nv));
        std::vector<float> ztv((size_t)z0.size());
        const int64_t stride = z0.size() / 32;
        for (int b = 0; b < 32; ++b) {
            const double c0 = std::sqrt(schedule.alpha_bar[ts[b]]);
            const double ce = std::sqrt(1.0 - schedule.alpha_bar[ts[b]]);
            for (int64_t i = 0; i < stride; ++i) {
                ztv[(size_t)(b * stride + i)] =
                    (float)(c0 * z0.values()[(size_t)(b * stride + i)] +
                            ce * eps.values()[(size_t)(b * stride + i)]);
            }
        }
        Tensor z_t = Tensor::from_data(z0.shape(), std::move(ztv));
        std::vector<std::string> prompts;
        for (auto* r : recs) prompts.push_back(r->prompt);
        Tensor et = gen->text_encoder().encode(prompts, bank);
        Tensor eh = gen->denoiser().forward(z_t, zn, ml, ts, et);
        const float masked = diff::gen_loss(eps, eh, z_t, zn, ml, ts, schedule, 0.0f).item();
        Tensor zero_eh = Tensor::zeros(eh.shape());
        const float masked0 = diff::gen_loss(eps, zero_eh, z_t, zn, ml, ts, schedule, 0.0f).item();
        std::printf("masked eps-loss: trained %.5f vs zero-predictor %.5f\n", (double)masked,
                    (double)masked0);
    }

    // Codec roundtrip audit: does probe shape classification survive
    // encode/decode? Bounds what generation can ever achieve.
    {
        autograd::NoGradGuard ng0;
        const auto test_a = ds.select("test", true);
        int n_ok_raw = 0, n_ok_rt = 0, n = 0;
        int shape_ok_raw = 0, shape_ok_rt = 0;
        for (size_t i = 0; i < test_a.size() && i < 96; ++i) {
            const auto* rec = test_a[i];
            Tensor img = data::load_images(ds, {rec});
            Tensor rt = codec->decode_norm(codec->encode_norm(img));
            int hh, ww;
            const auto mask_px = img::read_pgm(ds.root + "/" + rec->mask_file, hh, ww);
            std::vector<float> vr(img.values().begin(), img.values().end());
            std::vector<float> vt(rt.values().begin(), rt.values().end());
            const auto cr = toy::probe_classify(vr, mask_px, ds.image_size);
            const auto ct = toy::probe_classify(vt, mask_px, ds.image_size);
            ++n;
            if (cr == rec->spec) ++n_ok_raw;
            if (ct == rec->spec) ++n_ok_rt;
            if (cr.shape == rec->spec.shape) ++shape_ok_raw;
            if (ct.shape == rec->spec.shape) ++shape_ok_rt;
        }
        std::printf("roundtrip audit: full spec raw %d/%d rt %d/%d | shape raw %d/%d rt %d/%d\n",
                    n_ok_raw, n, n_ok_rt, n, shape_ok_raw, n, shape_ok_rt, n);
    }

    // Controllability + locality probes on held-out normals.
    const auto test_n = ds.select("test", false);
    const bool canon = argc > 4 && std::string(argv[4]) == "canon";
    const std::string prompt_a =
        canon ? "sessile smooth small conspicuous lesion" : "sessile polyp 5-10mm";
    const std::string prompt_b =
        canon ? "flat smooth small conspicuous lesion" : "flat lesion with unclear borders";
    const toy::LesionSpec small_spec = bank.prompt_to_spec(prompt_a);
    autograd::NoGradGuard ng;
    int distinct = 0, a_ok = 0, b_ok = 0;
    double worst_local = 0.0, mean_local = 0.0;
    double gen_seconds = 0.0;
    for (int i = 0; i < trials; ++i) {
        const auto* rec = test_n[i % test_n.size()];
        Tensor img = data::load_images(ds, {rec});
        Tensor z_n = codec->encode_norm(img);
        Rng mrng = Rng::substream(500, "pilot-mask", (uint64_t)i);
        const auto mask_px = toy::sample_mask(mrng, small_spec, ds.image_size);
        Tensor mask_t = Tensor::from_data({1, ds.image_size, ds.image_size, 1},
                                          std::vector<float>(mask_px.begin(), mask_px.end()));
        Tensor mlat = codec::downscale_mask(mask_t, codec->config().f);

        diff::GenerationConfig gcfg;
        gcfg.guidance_scale = guidance;
        double g0 = now_s();
        Tensor za = diff::inpaint_generate(*gen, z_n, mlat, prompt_a, bank, gcfg, schedule,
                                           1000 + (uint64_t)i);
        Tensor zb = diff::inpaint_generate(*gen, z_n, mlat, prompt_b, bank, gcfg, schedule,
                                           1000 + (uint64_t)i);
        gen_seconds += now_s() - g0;
        Tensor ia = codec->decode_norm(za);
        Tensor ib = codec->decode_norm(zb);
        Tensor in = codec->decode_norm(z_n);

        std::vector<float> va(ia.values().begin(), ia.values().end());
        std::vector<float> vb(ib.values().begin(), ib.values().end());
        const auto sa = toy::probe_classify(va, mask_px, ds.image_size).shape;
        const auto sb = toy::probe_classify(vb, mask_px, ds.image_size).shape;
        if (sa != sb) ++distinct;
        if (sa == toy::LesionShape::Sessile) ++a_ok;
        if (sb == toy::LesionShape::Flat) ++b_ok;
        if (i < 4) {
            const auto ma = toy::probe_measure(va, mask_px, ds.image_size);
            const auto mb = toy::probe_measure(vb, mask_px, ds.image_size);
            std::printf(
                "  trial %d: A shape=%s amp=%.3f rss=[%.4f %.4f %.4f] | B shape=%s amp=%.3f "
                "rss=[%.4f %.4f %.4f]\n",
                i, toy::to_string(sa).c_str(), ma.amp_estimate, ma.stalk_offset, ma.edge_ratio,
                0.0, toy::to_string(sb).c_str(), mb.amp_estimate, mb.stalk_offset, mb.edge_ratio,
                0.0);
        }

        // mean |decode(z_a) - decode(z_n)| outside the pixel mask
        double acc = 0.0;
        int64_t cnt = 0;
        for (int p = 0; p < ds.image_size * ds.image_size; ++p) {
            if (mask_px[(size_t)p] != 0.0f) continue;
            for (int c = 0; c < 3; ++c) {
                acc += std::abs((double)ia.values()[(size_t)p * 3 + c] -
                                (double)in.values()[(size_t)p * 3 + c]);
                ++cnt;
            }
        }
        const double local = acc / (double)cnt;
        mean_local += local;
        worst_local = std::max(worst_local, local);

        if (i < 3) {
            img::write_ppm((work / ("a" + std::to_string(i) + ".ppm")).string(), va,
                           ds.image_size, ds.image_size);
            img::write_ppm((work / ("b" + std::to_string(i) + ".ppm")).string(), vb,
                           ds.image_size, ds.image_size);
        }
    }
    std::printf("controllability: distinct shapes %d/%d  (A=sessile ok %d, B=flat ok %d)\n",
                distinct, trials, a_ok, b_ok);
    std::printf("locality: mean %.5f  worst %.5f (target < 1e-2)\n", mean_local / trials,
                worst_local);
    std::printf("generation: %.1f ms each (two per trial)\n",
                1000.0 * gen_seconds / (2.0 * trials));
    std::printf("denoiser forwards so far: %lld\n", (long long)gen->denoiser().forward_count());
    return 0;
}
