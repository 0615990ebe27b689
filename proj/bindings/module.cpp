// Python bindings for the toyvlm core: tokenizer, templates, metrics,
// synthetic data, model inference and checkpoint I/O.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <set>

#include "toyvlm/checkpoint.hpp"
#include "toyvlm/data.hpp"
#include "toyvlm/errors.hpp"
#include "toyvlm/image.hpp"
#include "toyvlm/metrics.hpp"
#include "toyvlm/model.hpp"
#include "toyvlm/rng.hpp"
#include "toyvlm/synth.hpp"
#include "toyvlm/tokenizer.hpp"

namespace py = pybind11;
using namespace toyvlm;

namespace {

ModelConfig config_from_preset(const std::string& preset) {
    if (preset == "toy") return ModelConfig::toy();
    if (preset == "toy_tiny_plus") return ModelConfig::toy_tiny_plus();
    if (preset == "paper_shape") return ModelConfig::paper_shape();
    throw ConfigError("unknown model preset: " + preset);
}

TemplateKind template_from_name(const std::string& name) {
    if (name == "vicuna" || name == "vicuna_v1") return TemplateKind::VicunaV1;
    if (name == "qwen") return TemplateKind::QwenChat;
    throw ConfigError("unknown template: " + name + " (expected vicuna or qwen)");
}

TaskRecord record_from_dict(const py::dict& d) {
    TaskRecord rec;
    rec.kind = task_kind_from_name(d["kind"].cast<std::string>());
    rec.prompt = d["prompt"].cast<std::string>();
    rec.response = d["response"].cast<std::string>();
    if (d.contains("image_path")) rec.image_path = d["image_path"].cast<std::string>();
    validate_record(rec);
    return rec;
}

BBox box_from_seq(const std::vector<double>& v) {
    if (v.size() != 4) throw InputError("box must have 4 coordinates");
    return BBox{v[0], v[1], v[2], v[3]};
}

// Thin inference-oriented wrapper over the float model.
class PyModel {
public:
    PyModel(const std::string& preset, std::uint64_t seed) : model_(config_from_preset(preset), seed) {}

    explicit PyModel(const std::string& checkpoint_path)
        : model_([&] {
              auto ckpt = read_checkpoint(checkpoint_path);
              return ckpt.meta.config;
          }()) {
        auto ckpt = read_checkpoint(checkpoint_path);
        load_into_params(ckpt, model_.params(), true);
        stage_tag_ = ckpt.meta.stage_tag;
    }

    py::dict config() const {
        py::dict d;
        for (const auto& [k, v] : model_.config().to_kv()) d[py::str(k)] = v;
        return d;
    }

    std::string stage_tag() const { return stage_tag_; }

    std::vector<int> encode_image_shape(const std::string& ppm_path) {
        Image img = read_ppm(ppm_path);
        auto t = model_.encode_image(img);
        return t.shape();
    }

    // Returned as bytes: an untrained model can emit arbitrary byte tokens.
    py::bytes generate(const std::string& prompt, const std::optional<std::string>& image_path,
                       const std::string& template_name, int max_new_tokens, const std::string& task) {
        std::optional<Image> img;
        if (image_path) img = read_ppm(*image_path);
        auto out = model_.generate(prompt, img ? &*img : nullptr, template_from_name(template_name),
                                   max_new_tokens, task_kind_from_name(task));
        return py::bytes(out.text);
    }

    double loss(const py::dict& record, const std::string& template_name) {
        auto l = model_.record_loss(record_from_dict(record), template_from_name(template_name));
        return static_cast<double>(l.item());
    }

    std::uint64_t group_checksum(const std::string& prefix) const { return model_.group_checksum(prefix); }

    std::vector<std::string> param_names() const {
        std::vector<std::string> out;
        for (const auto& [name, p] : model_.params()) out.push_back(name);
        return out;
    }

    void save(const std::string& path, const std::string& stage_tag) {
        save_checkpoint(path, model_.params(), model_.config(), stage_tag);
    }

private:
    Vlm model_;
    std::string stage_tag_ = "init";
};

}  // namespace

PYBIND11_MODULE(_toyvlm, m) {
    m.doc() = "Tiny two-branch vision-language model core";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    // --- tokenizer -------------------------------------------------------
    py::class_<Tokenizer>(m, "Tokenizer")
        .def(py::init<>())
        .def_property_readonly("vocab_size", &Tokenizer::vocab_size)
        .def("encode", &Tokenizer::encode, py::arg("text"))
        .def("decode", &Tokenizer::decode, py::arg("ids"));

    // --- templates -------------------------------------------------------
    m.def(
        "render_template",
        [](const py::dict& record, const std::string& template_name, bool fix_typos) {
            return render_template(record_from_dict(record), template_from_name(template_name), fix_typos);
        },
        py::arg("record"), py::arg("template"), py::arg("fix_typos") = false);

    // --- metrics ---------------------------------------------------------
    m.def("levenshtein", [](const std::string& a, const std::string& b) { return levenshtein(a, b); });
    m.def("anls", &anls, py::arg("prediction"), py::arg("golds"), py::arg("tau") = 0.5);
    m.def("relaxed_accuracy", &relaxed_accuracy, py::arg("prediction"), py::arg("gold"),
          py::arg("tol") = 0.05);
    m.def(
        "iou",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return iou(box_from_seq(a), box_from_seq(b));
        },
        py::arg("box_a"), py::arg("box_b"));
    m.def(
        "normalize_box",
        [](const std::vector<double>& box, int width, int height) {
            NormBox n = normalize_box(box_from_seq(box), width, height);
            return std::vector<int>{n.x1, n.y1, n.x2, n.y2};
        },
        py::arg("box"), py::arg("width"), py::arg("height"));
    m.def(
        "denormalize_box",
        [](const std::vector<int>& box, int width, int height) {
            if (box.size() != 4) throw InputError("box must have 4 coordinates");
            BBox b = denormalize_box(NormBox{box[0], box[1], box[2], box[3]}, width, height);
            return std::vector<double>{b.x1, b.y1, b.x2, b.y2};
        },
        py::arg("box"), py::arg("width"), py::arg("height"));

    // --- synthetic data --------------------------------------------------
    m.def(
        "gen_document",
        [](std::uint64_t seed, int page_px, int min_lines, int max_lines) {
            DocumentConfig cfg;
            cfg.page_px = page_px;
            cfg.min_lines = min_lines;
            cfg.max_lines = max_lines;
            Rng rng(seed);
            Document doc = gen_document(rng, cfg);
            py::dict out;
            out["text"] = doc.text;
            out["markdown"] = doc.markdown;
            out["width"] = doc.image.width;
            out["height"] = doc.image.height;
            out["pixels"] = py::bytes(reinterpret_cast<const char*>(doc.image.pixels.data()),
                                      doc.image.pixels.size());
            return out;
        },
        py::arg("seed"), py::arg("page_px") = 64, py::arg("min_lines") = 2, py::arg("max_lines") = 6);

    m.def(
        "write_text_page",
        [](const std::string& text, int page_px, const std::string& path) {
            write_ppm(render_text_page(text, page_px), path);
        },
        py::arg("text"), py::arg("page_px"), py::arg("path"));

    // --- checkpoints -----------------------------------------------------
    m.def(
        "inspect_checkpoint",
        [](const std::string& path) {
            auto ckpt = read_checkpoint(path);
            std::size_t scalars = 0;
            for (const auto& [name, entry] : ckpt.tensors) scalars += entry.second.size();
            py::dict out;
            out["stage"] = ckpt.meta.stage_tag;
            py::dict cfg;
            for (const auto& [k, v] : ckpt.meta.config.to_kv()) cfg[py::str(k)] = v;
            out["config"] = cfg;
            out["n_tensors"] = ckpt.tensors.size();
            out["n_scalars"] = scalars;
            return out;
        },
        py::arg("path"));

    // --- model -----------------------------------------------------------
    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, std::uint64_t>(), py::arg("preset"), py::arg("seed") = 0)
        .def_static(
            "from_checkpoint", [](const std::string& path) { return std::make_unique<PyModel>(path); },
            py::arg("path"))
        .def_property_readonly("config", &PyModel::config)
        .def_property_readonly("stage_tag", &PyModel::stage_tag)
        .def("encode_image_shape", &PyModel::encode_image_shape, py::arg("ppm_path"))
        .def("generate", &PyModel::generate, py::arg("prompt"), py::arg("image_path") = std::nullopt,
             py::arg("template") = "vicuna_v1", py::arg("max_new_tokens") = 64, py::arg("task") = "vqa")
        .def("loss", &PyModel::loss, py::arg("record"), py::arg("template") = "vicuna_v1")
        .def("group_checksum", &PyModel::group_checksum, py::arg("prefix"))
        .def("param_names", &PyModel::param_names)
        .def("save", &PyModel::save, py::arg("path"), py::arg("stage_tag") = "init");
}
