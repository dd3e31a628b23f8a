#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/dnn.hpp>

#include "stegakit/backend.hpp"
#include "stegakit/clip_tokenizer.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// Pretrained-weights backend over ONNX exports, loaded with OpenCV's DNN
// module. Expected layout under model_dir:
//
//   model_dir/tokenizer/vocab.json
//   model_dir/tokenizer/merges.txt
//   model_dir/<model_id>/unet.onnx           eps prediction
//   model_dir/<model_id>/vae_encoder.onnx    image -> latent moments
//   model_dir/<model_id>/vae_decoder.onnx    latent -> image
//   model_dir/<model_id>/text_encoder.onnx   token ids -> hidden states
//   model_dir/<model_id>/image_encoder.onnx  (optional) image-prompt tokens
//   model_dir/<model_id>/controlnet.onnx     (optional) control residuals
//
// Anything missing raises BackendUnavailable up front with the exact path, so
// a machine without weights fails honestly instead of producing garbage.
// Handles are serial-only: cv::dnn::Net::forward mutates internal state.
class OnnxBackend final : public Backend {
  public:
    static constexpr double kLatentScale = 0.18215;
    static constexpr int kHiddenDim = 768;

    OnnxBackend(const std::string& model_dir, const std::string& model_id)
        : model_dir_(model_dir), model_id_(model_id) {
        namespace fs = std::filesystem;
        if (model_dir_.empty())
            throw BackendUnavailable("pretrained backend requires --model-dir");
        const fs::path root = fs::path(model_dir_) / model_id_;
        const fs::path tok = fs::path(model_dir_) / "tokenizer";

        auto require = [](const fs::path& p) {
            if (!fs::exists(p))
                throw BackendUnavailable("missing model file: " + p.string() +
                                         " (pretrained weights are not bundled; see README)");
            return p.string();
        };
        // Sequenced so the reported missing file is deterministic (argument
        // evaluation order is unspecified).
        const std::string vocab_path = require(tok / "vocab.json");
        const std::string merges_path = require(tok / "merges.txt");
        tokenizer_ =
            std::make_unique<ClipTokenizer>(ClipTokenizer::from_files(vocab_path, merges_path));
        unet_ = cv::dnn::readNetFromONNX(require(root / "unet.onnx"));
        vae_encoder_ = cv::dnn::readNetFromONNX(require(root / "vae_encoder.onnx"));
        vae_decoder_ = cv::dnn::readNetFromONNX(require(root / "vae_decoder.onnx"));
        text_encoder_ = cv::dnn::readNetFromONNX(require(root / "text_encoder.onnx"));
        if (fs::exists(root / "image_encoder.onnx")) {
            image_encoder_ = cv::dnn::readNetFromONNX((root / "image_encoder.onnx").string());
            has_image_encoder_ = true;
        }
        if (fs::exists(root / "controlnet.onnx")) {
            controlnet_ = cv::dnn::readNetFromONNX((root / "controlnet.onnx").string());
            has_controlnet_ = true;
        }
    }

    BackendInfo info() const override {
        BackendInfo i;
        i.name = "pretrained:" + model_id_;
        i.deterministic = true;   // CPU DNN inference; no sampling anywhere
        i.concurrent_safe = false;
        i.latent_channels = 4;
        i.latent_downscale = 8;
        return i;
    }

    std::vector<int> latent_shape(int image_height, int image_width) const override {
        if (image_height % 8 != 0 || image_width % 8 != 0)
            throw BackendError("pretrained backend needs image dimensions divisible by 8, got " +
                               std::to_string(image_height) + "x" + std::to_string(image_width));
        return {4, image_height / 8, image_width / 8};
    }

    Tensor encode(const Image& image) const override {
        if (image.shape.size() != 3 || image.shape[0] != 3)
            throw BackendError("encode expects a (3,H,W) image, got " + shape_str(image.shape));
        const int h = image.shape[1], w = image.shape[2];
        const auto lshape = latent_shape(h, w);

        // [0,1] -> [-1,1], NCHW blob
        std::vector<int> blob_shape = {1, 3, h, w};
        cv::Mat blob(4, blob_shape.data(), CV_32F);
        auto* dst = reinterpret_cast<float*>(blob.data);
        for (size_t i = 0; i < image.size(); ++i) dst[i] = image.data[i] * 2.0f - 1.0f;

        cv::Mat out = forward(vae_encoder_, blob, "vae_encoder");
        const size_t n = shape_numel(lshape);
        // Encoders exported with moment outputs give (1, 8, h/8, w/8): mean
        // then logvar. Deterministic protocol uses the mean.
        const size_t have = out.total();
        if (have != n && have != 2 * n)
            throw BackendError("vae_encoder output size " + std::to_string(have) +
                               " does not match latent shape " + shape_str(lshape));
        Tensor latent = Tensor::zeros(lshape);
        const auto* src = reinterpret_cast<const float*>(out.data);
        for (size_t i = 0; i < n; ++i)
            latent.data[i] = src[i] * static_cast<float>(kLatentScale);
        ensure_finite(latent, "vae encode");
        return latent;
    }

    Image decode(const Tensor& latent) const override {
        if (latent.shape.size() != 3 || latent.shape[0] != 4)
            throw BackendError("decode expects a (4,h,w) latent, got " + shape_str(latent.shape));
        std::vector<int> blob_shape = {1, 4, latent.shape[1], latent.shape[2]};
        cv::Mat blob(4, blob_shape.data(), CV_32F);
        auto* dst = reinterpret_cast<float*>(blob.data);
        for (size_t i = 0; i < latent.size(); ++i)
            dst[i] = latent.data[i] / static_cast<float>(kLatentScale);

        cv::Mat out = forward(vae_decoder_, blob, "vae_decoder");
        const int h = latent.shape[1] * 8, w = latent.shape[2] * 8;
        if (out.total() != static_cast<size_t>(3) * h * w)
            throw BackendError("vae_decoder output size mismatch");
        Image img = Image::zeros({3, h, w});
        const auto* src = reinterpret_cast<const float*>(out.data);
        for (size_t i = 0; i < img.size(); ++i) {
            const float v = (src[i] + 1.0f) * 0.5f;
            img.data[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
        return img;
    }

    std::vector<float> embed_text(const std::string& prompt) const override {
        bool truncated = false;
        std::vector<int> ids = tokenizer_->encode(prompt, ClipTokenizer::kContextLength, &truncated);
        if (truncated)
            std::fprintf(stderr, "warning: prompt exceeds %d tokens and was truncated\n",
                         ClipTokenizer::kContextLength);
        std::vector<int> blob_shape = {1, ClipTokenizer::kContextLength};
        cv::Mat blob(2, blob_shape.data(), CV_32S);
        auto* dst = reinterpret_cast<int32_t*>(blob.data);
        for (size_t i = 0; i < ids.size(); ++i) dst[i] = ids[i];

        cv::Mat out = forward(text_encoder_, blob, "text_encoder");
        const size_t want = static_cast<size_t>(ClipTokenizer::kContextLength) * kHiddenDim;
        if (out.total() < want) throw BackendError("text_encoder output too small");
        const auto* src = reinterpret_cast<const float*>(out.data);
        return std::vector<float>(src, src + want);
    }

    std::vector<float> embed_image(const Image& reference) const override {
        if (!has_image_encoder_)
            throw BackendUnavailable(
                "image-prompt conditioning needs image_encoder.onnx for model '" + model_id_ +
                "'; not present under " + model_dir_);
        if (reference.shape.size() != 3 || reference.shape[0] != 3)
            throw BackendError("embed_image expects a (3,H,W) image");
        std::vector<int> blob_shape = {1, 3, reference.shape[1], reference.shape[2]};
        cv::Mat blob(4, blob_shape.data(), CV_32F);
        auto* dst = reinterpret_cast<float*>(blob.data);
        for (size_t i = 0; i < reference.size(); ++i) dst[i] = reference.data[i] * 2.0f - 1.0f;
        cv::Mat out = forward(image_encoder_, blob, "image_encoder");
        const auto* src = reinterpret_cast<const float*>(out.data);
        return std::vector<float>(src, src + out.total());
    }

    Tensor predict_noise(const Tensor& latent, int t, const Conditioning& cond) const override {
        if (latent.shape.size() != 3 || latent.shape[0] != 4)
            throw BackendError("predict_noise expects a (4,h,w) latent, got " + shape_str(latent.shape));
        if (cond.control && cond.control->scale != 0.0f && !has_controlnet_)
            throw BackendUnavailable("control conditioning needs controlnet.onnx for model '" +
                                     model_id_ + "'");

        // Hidden states: text tokens, then image-prompt tokens scaled by the
        // injection weight (decoupled-token convention).
        std::vector<float> hidden = cond.text_embedding;
        if (cond.image_prompt && cond.image_prompt->weight != 0.0f) {
            const auto& ip = cond.image_prompt->embedding;
            if (ip.size() % kHiddenDim != 0)
                throw BackendError("image-prompt embedding is not a multiple of the hidden dim");
            const float w = cond.image_prompt->weight;
            for (float v : ip) hidden.push_back(v * w);
        }
        if (hidden.size() % kHiddenDim != 0)
            throw BackendError("conditioning embedding is not a multiple of the hidden dim");
        const int tokens = static_cast<int>(hidden.size() / kHiddenDim);

        std::vector<int> sample_shape = {1, 4, latent.shape[1], latent.shape[2]};
        cv::Mat sample(4, sample_shape.data(), CV_32F);
        std::copy(latent.data.begin(), latent.data.end(), reinterpret_cast<float*>(sample.data));

        std::vector<int> t_shape = {1};
        cv::Mat timestep(1, t_shape.data(), CV_32F);
        reinterpret_cast<float*>(timestep.data)[0] = static_cast<float>(t);

        std::vector<int> h_shape = {1, tokens, kHiddenDim};
        cv::Mat states(3, h_shape.data(), CV_32F);
        std::copy(hidden.begin(), hidden.end(), reinterpret_cast<float*>(states.data));

        cv::Mat out;
        {
            auto& net = const_cast<cv::dnn::Net&>(unet_);
            net.setInput(sample, "sample");
            net.setInput(timestep, "timestep");
            net.setInput(states, "encoder_hidden_states");
            out = net.forward();
        }
        if (out.total() != latent.size()) throw BackendError("unet output size mismatch");
        Tensor eps = Tensor::zeros(latent.shape);
        const auto* src = reinterpret_cast<const float*>(out.data);
        std::copy(src, src + latent.size(), eps.data.begin());
        ensure_finite(eps, "unet output");
        return eps;
    }

  private:
    static cv::Mat forward(const cv::dnn::Net& net, const cv::Mat& input, const char* name) {
        try {
            auto& n = const_cast<cv::dnn::Net&>(net);
            n.setInput(input);
            return n.forward().clone();
        } catch (const cv::Exception& e) {
            throw BackendError(std::string(name) + " inference failed: " + e.what());
        }
    }

    std::string model_dir_;
    std::string model_id_;
    std::unique_ptr<ClipTokenizer> tokenizer_;
    cv::dnn::Net unet_, vae_encoder_, vae_decoder_, text_encoder_, image_encoder_, controlnet_;
    bool has_image_encoder_ = false;
    bool has_controlnet_ = false;
};

}  // namespace stegakit
