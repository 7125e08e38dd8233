#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synthval/conditioning.hpp"
#include "synthval/tensor.hpp"
#include "synthval/toy.hpp"

namespace synthval::data {

/// One dataset sample. Abnormal samples carry the lesion spec, its realized
/// mask, the pre-lesion base image and the canonical prompt; normal samples
/// are background-only.
struct SampleRecord {
    std::string id;
    std::string split;       // "train" or "test"
    bool abnormal = false;
    std::string image_file;  // relative to the dataset root
    std::string mask_file;   // abnormal only, else empty
    std::string base_file;   // abnormal only: background before compositing
    std::string prompt;      // abnormal only: canonical prompt text
    toy::LesionSpec spec;    // abnormal only
    double size_fraction = 0.0;  // abnormal only: realized mask area fraction
};

struct BuildConfig {
    int image_size = 32;
    int n_normal = 800;
    int n_abnormal = 612;
    // Split shares; defaults reproduce the reference protocol's 488/124
    // abnormal train/test counts.
    double train_ratio = 488.0 / 612.0;
    double test_ratio = 124.0 / 612.0;
    uint64_t seed = 7;
};

struct Dataset {
    std::string root;
    int image_size = 0;
    uint64_t seed = 0;
    std::vector<SampleRecord> records;

    /// Records in `split`, abnormal or normal. Order is manifest order.
    std::vector<const SampleRecord*> select(const std::string& split, bool abnormal) const;
};

/// Renders the full procedural corpus under `out_dir`: portable image files,
/// a line-delimited manifest, the prompt bank and a dataset header. Byte
/// deterministic per config.
Dataset build_dataset(const BuildConfig& cfg, const cond::PromptBank& bank,
                      const std::string& out_dir);

/// Reads back a dataset written by build_dataset (manifest + header only;
/// pixel data loads lazily through the loaders below).
Dataset load_dataset(const std::string& root);

/// Loads the records' images as one [N,H,W,3] tensor in [0,1].
Tensor load_images(const Dataset& ds, const std::vector<const SampleRecord*>& recs);
/// Loads the records' base (pre-lesion) images as one [N,H,W,3] tensor.
Tensor load_base_images(const Dataset& ds, const std::vector<const SampleRecord*>& recs);
/// Loads the records' masks as one [N,H,W,1] tensor in {0,1}.
Tensor load_masks(const Dataset& ds, const std::vector<const SampleRecord*>& recs);

}  // namespace synthval::data
