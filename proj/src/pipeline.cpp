#include "qris/pipeline.hpp"

#include <chrono>

namespace qris {

ImageAnalysis analyze(const GrayImage& image) {
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t) { return std::chrono::duration<double, std::milli>(clock::now() - t).count(); };
    ImageAnalysis out;
    auto t = clock::now();
    const GrayImage clean = preprocess(image);
    out.timings.preprocess_ms = ms_since(t);
    t = clock::now();
    out.grid = binarize_to_grid(clean);
    out.timings.grid_ms = ms_since(t);
    t = clock::now();
    out.features = extract_all(out.grid);
    out.timings.features_ms = ms_since(t);
    return out;
}

}  // namespace qris
