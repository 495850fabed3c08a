#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>

#include "qris/dataset.hpp"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/features.hpp"
#include "qris/image_io.hpp"
#include "qris/imaging.hpp"
#include "qris/model.hpp"
#include "qris/pipeline.hpp"
#include "qris/qr_tables.hpp"

namespace py = pybind11;
using namespace qris;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

U8Array grid_to_array(const ModuleGrid& g) {
    const auto n = static_cast<py::ssize_t>(g.side());
    U8Array out({n, n});
    std::memcpy(out.mutable_data(), g.cells().data(), g.cells().size());
    return out;
}

ModuleGrid array_to_grid(const U8Array& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw Error(ErrorCode::InvalidArgument, "grid must be a square 2-D array");
    const int n = static_cast<int>(a.shape(0));
    ModuleGrid g(n);
    const auto* p = a.data();
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) g.set(r, c, p[r * n + c] != 0);
    }
    return g;
}

U8Array image_to_array(const GrayImage& img) {
    U8Array out({static_cast<py::ssize_t>(img.height()), static_cast<py::ssize_t>(img.width())});
    std::memcpy(out.mutable_data(), img.pixels().data(), img.pixels().size());
    return out;
}

GrayImage array_to_image(const U8Array& a) {
    if (a.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "image must be a 2-D uint8 array");
    const auto* p = a.data();
    return GrayImage(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                     std::vector<std::uint8_t>(p, p + a.size()));
}

EccLevel ecc_arg(const std::string& s) {
    const auto e = parse_ecc(s);
    if (!e) throw Error(ErrorCode::InvalidArgument, "ECC level must be L, M, Q or H");
    return *e;
}

py::dict encoding_dict(const QrMatrix& m) {
    py::dict d;
    d["grid"] = grid_to_array(m.grid);
    d["version"] = m.params.version;
    d["ecc"] = std::string(1, ecc_letter(m.params.ecc));
    d["mask"] = m.params.mask;
    d["mode"] = std::string(mode_name(m.params.mode));
    return d;
}

py::dict features_dict(const FeatureVector& f) {
    py::dict d;
    const auto values = f.values();
    for (int i = 0; i < kNumFeatures; ++i) d[py::str(std::string(feature_names()[i]))] = values[i];
    return d;
}

FeatureTable table_from(const F64Array& x, const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
    if (x.ndim() != 2 || x.shape(1) != kNumFeatures) {
        throw Error(ErrorCode::SchemaMismatch, "X must have shape (n, " + std::to_string(kNumFeatures) + ")");
    }
    if (y.ndim() != 1 || y.shape(0) != x.shape(0)) throw Error(ErrorCode::InvalidArgument, "y must match the rows of X");
    FeatureTable t;
    for (py::ssize_t i = 0; i < x.shape(0); ++i) {
        std::array<double, kNumFeatures> row{};
        std::memcpy(row.data(), x.data(i, 0), sizeof(double) * kNumFeatures);
        t.rows.push_back(row);
        t.labels.push_back(y.at(i));
    }
    return t;
}

py::tuple table_to_arrays(const FeatureTable& t) {
    F64Array x({static_cast<py::ssize_t>(t.size()), static_cast<py::ssize_t>(kNumFeatures)});
    py::array_t<int> y(static_cast<py::ssize_t>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::memcpy(x.mutable_data(i, 0), t.rows[i].data(), sizeof(double) * kNumFeatures);
        y.mutable_at(i) = t.labels[i];
    }
    return py::make_tuple(x, y);
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    d["auc"] = r.auc;
    d["tp"] = r.tp;
    d["fp"] = r.fp;
    d["tn"] = r.tn;
    d["fn"] = r.fn;
    py::list roc;
    for (const auto& p : r.roc) roc.append(py::make_tuple(p.fpr, p.tpr));
    d["roc"] = roc;
    return d;
}

}  // namespace

PYBIND11_MODULE(_qris, m) {
    m.doc() = "QR structure features and tree-ensemble phishing classifier";

    // Kept alive by the module attribute for the life of the interpreter.
    static PyObject* qris_error = PyErr_NewException("qris._qris.QrisError", PyExc_RuntimeError, nullptr);
    m.attr("QrisError") = py::handle(qris_error);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(qris_error)(py::str(e.what()));
            exc.attr("code") = std::string(error_code_name(e.code()));
            PyErr_SetObject(qris_error, exc.ptr());
        }
    });

    m.attr("NUM_FEATURES") = kNumFeatures;
    m.def("feature_names", [] {
        std::vector<std::string> out;
        for (auto n : feature_names()) out.emplace_back(n);
        return out;
    });

    m.def(
        "encode",
        [](const std::string& payload, std::optional<std::string> ecc, std::uint64_t seed) {
            std::optional<EccLevel> e;
            if (ecc) e = ecc_arg(*ecc);
            return encoding_dict(encode(payload, e, seed));
        },
        py::arg("payload"), py::arg("ecc") = py::none(), py::arg("seed") = 0,
        "Encode with automatic version and mask. Returns grid (uint8, 1 = dark) and parameters.");
    m.def(
        "encode_with",
        [](const std::string& payload, int version, const std::string& ecc, std::optional<int> mask) {
            return encoding_dict(encode_with(payload, ForcedEncoding{version, ecc_arg(ecc), std::nullopt, mask}));
        },
        py::arg("payload"), py::arg("version"), py::arg("ecc"), py::arg("mask") = py::none());

    m.def(
        "render", [](const U8Array& grid, int module_px, int quiet_zone) {
            return image_to_array(render(array_to_grid(grid), module_px, quiet_zone));
        },
        py::arg("grid"), py::arg("module_px") = 8, py::arg("quiet_zone") = 4);
    m.def("preprocess", [](const U8Array& image) { return image_to_array(preprocess(array_to_image(image))); });
    m.def("estimate_module_size", [](const U8Array& image) { return estimate_module_size(array_to_image(image)); });
    m.def("binarize_to_grid", [](const U8Array& image) {
        const BinaryGrid g = binarize_to_grid(array_to_image(image));
        return py::make_tuple(grid_to_array(g.cells), g.module_size_px);
    });
    m.def("extract_features", [](const U8Array& grid) { return features_dict(extract_all(array_to_grid(grid))); });
    m.def("analyze", [](const U8Array& image) {
        const ImageAnalysis a = analyze(array_to_image(image));
        py::dict d;
        d["grid"] = grid_to_array(a.grid.cells);
        d["module_size_px"] = a.grid.module_size_px;
        d["features"] = features_dict(a.features);
        return d;
    });
    m.def("decode_image", [](const py::bytes& data) { return image_to_array(decode_image(std::string(data))); });
    m.def("encode_png", [](const U8Array& image) { return py::bytes(encode_png(array_to_image(image))); });

    m.def("format_bits", [](const std::string& ecc, int mask) { return tables::format_bits(ecc_arg(ecc), mask); });
    m.def("decode_format_bits", [](std::uint16_t bits) -> py::object {
        const auto info = tables::decode_format_bits(bits);
        if (!info) return py::none();
        return py::make_tuple(std::string(1, ecc_letter(info->ecc)), info->mask, info->distance);
    });

    m.def(
        "build_dataset",
        [](const std::vector<std::pair<std::string, int>>& urls, long per_label, std::uint64_t seed, int jobs) {
            std::vector<UrlRecord> recs;
            for (const auto& [url, label] : urls) recs.push_back({url, label ? Label::Phish : Label::Legit});
            return table_to_arrays(build_dataset(recs, BuildOptions{per_label, seed, jobs}).table);
        },
        py::arg("urls"), py::arg("per_label"), py::arg("seed") = 42, py::arg("jobs") = 1,
        "Encode (url, label) pairs and return (X, y).");

    m.def(
        "evaluate_scores",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return report_dict(evaluate_scores(scores, labels));
        },
        py::arg("scores"), py::arg("labels"));

    py::class_<TreeEnsemble>(m, "Model")
        .def_static(
            "train",
            [](const F64Array& x, const py::array_t<int, py::array::c_style | py::array::forcecast>& y,
               const std::string& kind, const std::string& params_json, std::uint64_t seed, int jobs) {
                HyperParams p = params_json.empty() ? HyperParams{} : parse_hyperparams(params_json);
                if (params_json.empty()) {
                    const auto k = parse_kind(kind);
                    if (!k) throw Error(ErrorCode::InvalidArgument, "kind must be gbdt or rf");
                    p.kind = *k;
                }
                const FeatureTable t = table_from(x, y);
                py::gil_scoped_release release;
                return train(t, p, seed, TrainOptions{jobs});
            },
            py::arg("X"), py::arg("y"), py::arg("kind") = "gbdt", py::arg("params") = "", py::arg("seed") = 42,
            py::arg("jobs") = 1)
        .def_static("load", [](const std::string& path) { return TreeEnsemble::load(path); })
        .def_static("from_bytes", [](const py::bytes& b) { return TreeEnsemble::deserialize(std::string(b)); })
        .def("save", [](const TreeEnsemble& self, const std::string& path) { self.save(path); })
        .def("to_bytes", [](const TreeEnsemble& self) { return py::bytes(self.serialize()); })
        .def_property_readonly("id", &TreeEnsemble::id)
        .def_property_readonly("kind", [](const TreeEnsemble& self) { return std::string(kind_name(self.kind)); })
        .def_property_readonly("n_trees", [](const TreeEnsemble& self) { return self.trees.size(); })
        .def("predict_proba",
             [](const TreeEnsemble& self, const F64Array& x) {
                 if (x.ndim() != 2 || x.shape(1) != kNumFeatures) {
                     throw Error(ErrorCode::SchemaMismatch, "X must have " + std::to_string(kNumFeatures) + " columns");
                 }
                 py::array_t<double> out(x.shape(0));
                 for (py::ssize_t i = 0; i < x.shape(0); ++i) {
                     std::array<double, kNumFeatures> row{};
                     std::memcpy(row.data(), x.data(i, 0), sizeof(double) * kNumFeatures);
                     out.mutable_at(i) = self.probability(row);
                 }
                 return out;
             })
        .def("evaluate",
             [](const TreeEnsemble& self, const F64Array& x,
                const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
                 return report_dict(evaluate(self, table_from(x, y)));
             });
}
