#pragma once

#include <string>
#include <vector>

#include "strukt/annotations.hpp"
#include "strukt/frontend.hpp"
#include "strukt/model.hpp"

namespace strukt {

// Everything needed to run inference: encoder + frontend configs, the label
// vocabulary, per-band feature statistics from the training corpus, and the
// flat parameter vector.
struct ModelBundle {
    EncoderConfig encoder;
    FrontendConfig frontend;
    std::vector<std::string> vocabulary;
    std::vector<double> mel_mean;  // per band
    std::vector<double> mel_std;   // per band
    std::vector<double> params;    // flat, Encoder layout order
    std::uint64_t init_seed = 0;

    LabelVocab vocab() const;
};

// File layout: magic "STKM", u32 version, u32 json_len, JSON block (configs,
// vocabulary, feature statistics), u64 count, little-endian f64 parameters.
void save_model(const std::string& path, const ModelBundle& bundle);
ModelBundle load_model(const std::string& path);

void write_vocabulary(const std::string& path, const std::vector<std::string>& names);

}  // namespace strukt
