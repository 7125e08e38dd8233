#include "synthval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "synthval/common.hpp"
#include "synthval/image.hpp"
#include "synthval/rng.hpp"

namespace synthval::data {

namespace fs = std::filesystem;

namespace {

std::string sample_id(const char* kind, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%05d", kind, i);
    return buf;
}

nlohmann::json record_to_json(const SampleRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = r.split;
    j["abnormal"] = r.abnormal;
    j["image_file"] = r.image_file;
    if (r.abnormal) {
        j["mask_file"] = r.mask_file;
        j["base_file"] = r.base_file;
        j["prompt"] = r.prompt;
        j["shape"] = toy::to_string(r.spec.shape);
        j["surface"] = toy::to_string(r.spec.surface);
        j["size"] = toy::to_string(r.spec.size);
        j["prominence"] = toy::to_string(r.spec.prominence);
        j["size_fraction"] = r.size_fraction;
    }
    return j;
}

SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.abnormal = j.at("abnormal").get<bool>();
    r.image_file = j.at("image_file").get<std::string>();
    if (r.abnormal) {
        r.mask_file = j.at("mask_file").get<std::string>();
        r.base_file = j.at("base_file").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.spec.shape = toy::parse_shape(j.at("shape").get<std::string>());
        r.spec.surface = toy::parse_surface(j.at("surface").get<std::string>());
        r.spec.size = toy::parse_size(j.at("size").get<std::string>());
        r.spec.prominence = toy::parse_prominence(j.at("prominence").get<std::string>());
        r.size_fraction = j.at("size_fraction").get<double>();
    }
    return r;
}

}  // namespace

std::vector<const SampleRecord*> Dataset::select(const std::string& split,
                                                 bool abnormal) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records) {
        if (r.split == split && r.abnormal == abnormal) out.push_back(&r);
    }
    return out;
}

Dataset build_dataset(const BuildConfig& cfg, const cond::PromptBank& bank,
                      const std::string& out_dir) {
    if (cfg.image_size < 16) throw ConfigError("dataset image_size must be >= 16");
    if (cfg.n_normal < 1 || cfg.n_abnormal < 1) {
        throw ConfigError("dataset needs at least one normal and one abnormal sample");
    }
    if (std::abs(cfg.train_ratio + cfg.test_ratio - 1.0) > 1e-9) {
        throw ConfigError("dataset split ratios must sum to 1");
    }
    const int size = cfg.image_size;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    Dataset ds;
    ds.root = out_dir;
    ds.image_size = size;
    ds.seed = cfg.seed;

    const int abn_train = static_cast<int>(std::llround(cfg.n_abnormal * cfg.train_ratio));
    const int nrm_train = static_cast<int>(std::llround(cfg.n_normal * cfg.train_ratio));

    // Abnormal samples cycle through the full attribute grid so every spec is
    // represented in both splits.
    for (int i = 0; i < cfg.n_abnormal; ++i) {
        Rng rng = Rng::substream(cfg.seed, "abnormal", static_cast<uint64_t>(i));
        const toy::LesionSpec spec = toy::spec_from_index(i % toy::kSpecCount);
        const auto base = toy::generate_normal(rng, size);
        const auto mask = toy::sample_mask(rng, spec, size);
        const auto image = toy::render_abnormality(base, mask, size, spec, rng);

        SampleRecord r;
        r.id = sample_id("abn", i);
        r.split = i < abn_train ? "train" : "test";
        r.abnormal = true;
        r.image_file = "images/" + r.id + ".ppm";
        r.base_file = "images/" + r.id + "-base.ppm";
        r.mask_file = "masks/" + r.id + ".pgm";
        r.prompt = bank.spec_to_prompt(spec);
        r.spec = spec;
        double area = 0.0;
        for (float v : mask) area += v;
        r.size_fraction = area / (static_cast<double>(size) * size);

        img::write_ppm(fs::path(out_dir) / r.image_file, image, size, size);
        img::write_ppm(fs::path(out_dir) / r.base_file, base, size, size);
        img::write_pgm(fs::path(out_dir) / r.mask_file, mask, size, size);
        ds.records.push_back(std::move(r));
    }

    for (int i = 0; i < cfg.n_normal; ++i) {
        Rng rng = Rng::substream(cfg.seed, "normal", static_cast<uint64_t>(i));
        const auto image = toy::generate_normal(rng, size);

        SampleRecord r;
        r.id = sample_id("nrm", i);
        r.split = i < nrm_train ? "train" : "test";
        r.abnormal = false;
        r.image_file = "images/" + r.id + ".ppm";
        img::write_ppm(fs::path(out_dir) / r.image_file, image, size, size);
        ds.records.push_back(std::move(r));
    }

    std::string manifest;
    for (const auto& r : ds.records) {
        manifest += record_to_json(r).dump();
        manifest += '\n';
    }
    write_text_file((fs::path(out_dir) / "manifest.jsonl").string(), manifest);

    nlohmann::json header;
    header["image_size"] = size;
    header["n_abnormal"] = cfg.n_abnormal;
    header["n_normal"] = cfg.n_normal;
    header["seed"] = cfg.seed;
    header["train_ratio"] = cfg.train_ratio;
    header["test_ratio"] = cfg.test_ratio;
    write_text_file((fs::path(out_dir) / "dataset.json").string(), header.dump(2) + "\n");

    bank.save_jsonl((fs::path(out_dir) / "prompts.jsonl").string());
    return ds;
}

Dataset load_dataset(const std::string& root) {
    Dataset ds;
    ds.root = root;
    const std::string header_text = read_text_file((fs::path(root) / "dataset.json").string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dataset header unreadable: " + std::string(e.what()));
    }
    ds.image_size = header.at("image_size").get<int>();
    ds.seed = header.at("seed").get<uint64_t>();

    const std::string manifest = read_text_file((fs::path(root) / "manifest.jsonl").string());
    std::istringstream in(manifest);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("dataset manifest line " + std::to_string(line_no) + ": " +
                              e.what());
        }
    }
    if (ds.records.empty()) throw ConfigError("dataset manifest has no records");
    return ds;
}

namespace {

Tensor load_rgb(const Dataset& ds, const std::vector<const SampleRecord*>& recs,
                const std::string SampleRecord::*field) {
    if (recs.empty()) throw ConfigError("empty record selection");
    const int size = ds.image_size;
    const int n = static_cast<int>(recs.size());
    std::vector<float> all;
    all.reserve(static_cast<size_t>(n) * size * size * 3);
    for (const auto* r : recs) {
        const std::string& rel = r->*field;
        if (rel.empty()) {
            throw MissingArtifactError("record " + r->id + " has no such image");
        }
        int h = 0, w = 0;
        const auto px = img::read_ppm(fs::path(ds.root) / rel, h, w);
        if (h != size || w != size) {
            throw ConfigError("image " + rel + " has unexpected dimensions");
        }
        all.insert(all.end(), px.begin(), px.end());
    }
    return Tensor::from_data({n, size, size, 3}, all);
}

}  // namespace

Tensor load_images(const Dataset& ds, const std::vector<const SampleRecord*>& recs) {
    return load_rgb(ds, recs, &SampleRecord::image_file);
}

Tensor load_base_images(const Dataset& ds, const std::vector<const SampleRecord*>& recs) {
    return load_rgb(ds, recs, &SampleRecord::base_file);
}

Tensor load_masks(const Dataset& ds, const std::vector<const SampleRecord*>& recs) {
    if (recs.empty()) throw ConfigError("empty record selection");
    const int size = ds.image_size;
    const int n = static_cast<int>(recs.size());
    std::vector<float> all;
    all.reserve(static_cast<size_t>(n) * size * size);
    for (const auto* r : recs) {
        if (r->mask_file.empty()) {
            throw MissingArtifactError("record " + r->id + " has no mask");
        }
        int h = 0, w = 0;
        const auto px = img::read_pgm(fs::path(ds.root) / r->mask_file, h, w);
        if (h != size || w != size) {
            throw ConfigError("mask " + r->mask_file + " has unexpected dimensions");
        }
        all.insert(all.end(), px.begin(), px.end());
    }
    return Tensor::from_data({n, size, size, 1}, all);
}

}  // namespace synthval::data
