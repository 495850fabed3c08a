#pragma once

#include "qris/features.hpp"
#include "qris/imaging.hpp"

namespace qris {

struct StageTimings {
    double preprocess_ms = 0.0;
    double grid_ms = 0.0;
    double features_ms = 0.0;
};

struct ImageAnalysis {
    BinaryGrid grid;
    FeatureVector features;
    StageTimings timings;
};

/// preprocess -> binarize_to_grid -> extract_all. The payload is never decoded.
ImageAnalysis analyze(const GrayImage& image);

}  // namespace qris
