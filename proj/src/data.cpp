#include "patcher/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "patcher/ops.hpp"

namespace patcher {

Tensor tensor_from_image(const ImageU8& img) {
    Tensor t = Tensor::zeros({img.channels, img.height, img.width});
    float* p = t.mutable_data();
    for (int64_t c = 0; c < img.channels; ++c) {
        for (int64_t y = 0; y < img.height; ++y) {
            for (int64_t x = 0; x < img.width; ++x) {
                p[(c * img.height + y) * img.width + x] = static_cast<float>(img.at(y, x, c)) / 255.0f;
            }
        }
    }
    return t;
}

Tensor mask_from_image(const ImageU8& img) {
    Tensor t = Tensor::zeros({1, img.height, img.width});
    float* p = t.mutable_data();
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            p[y * img.width + x] = img.at(y, x, 0) >= 128 ? 1.0f : 0.0f;
        }
    }
    return t;
}

ImageU8 gray_image_from_plane(const Tensor& plane, float scale) {
    int64_t h, w;
    if (plane.ndim() == 2) {
        h = plane.dim(0);
        w = plane.dim(1);
    } else if (plane.ndim() == 3 && plane.dim(0) == 1) {
        h = plane.dim(1);
        w = plane.dim(2);
    } else {
        throw DataError("gray_image_from_plane: expected [H,W] or [1,H,W], got " + shape_str(plane.shape()));
    }
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(h * w));
    const float* p = plane.data();
    for (int64_t i = 0; i < h * w; ++i) {
        const float v = std::clamp(p[i] * scale, 0.0f, 255.0f);
        img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v));
    }
    return img;
}

namespace {

std::map<std::string, std::filesystem::path> png_stems(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
    std::map<std::string, std::filesystem::path> stems;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        stems.emplace(entry.path().stem().string(), entry.path());
    }
    return stems;
}

bool strip_suffix(std::string& s, const std::string& suffix) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
        s.resize(s.size() - suffix.size());
        return true;
    }
    return false;
}

}  // namespace

std::vector<Sample> load_dir(const std::filesystem::path& images_dir, const std::filesystem::path& masks_dir) {
    auto image_files = png_stems(images_dir);
    auto mask_files = png_stems(masks_dir);

    // Group two-channel cases (<stem>_eadc + <stem>_dwi) under one id.
    struct Case {
        std::filesystem::path single;
        std::filesystem::path eadc;
        std::filesystem::path dwi;
    };
    std::map<std::string, Case> cases;
    for (const auto& [stem, path] : image_files) {
        std::string base = stem;
        if (strip_suffix(base, "_eadc")) {
            cases[base].eadc = path;
        } else if (strip_suffix(base, "_dwi")) {
            cases[base].dwi = path;
        } else {
            cases[base].single = path;
        }
    }

    std::vector<Sample> samples;
    samples.reserve(cases.size());
    for (const auto& [id, c] : cases) {
        const bool two_channel = !c.eadc.empty() || !c.dwi.empty();
        if (two_channel && (c.eadc.empty() || c.dwi.empty())) {
            throw DataError("case '" + id + "': two-channel pair incomplete (need both _eadc and _dwi)");
        }
        auto mask_it = mask_files.find(id);
        if (mask_it == mask_files.end()) {
            throw DataError("image '" + id + "' has no matching mask");
        }
        const ImageU8 mask_img = read_png(mask_it->second);
        Tensor mask = mask_from_image(mask_img);

        Tensor image;
        if (two_channel) {
            const ImageU8 a = read_png(c.eadc);
            const ImageU8 b = read_png(c.dwi);
            if (a.channels != 1 || b.channels != 1) {
                throw DataError("case '" + id + "': _eadc/_dwi files must be grayscale");
            }
            if (a.width != b.width || a.height != b.height) {
                throw DataError("case '" + id + "': channel sizes disagree");
            }
            Tensor ta = tensor_from_image(a);
            Tensor tb = tensor_from_image(b);
            NoGradGuard ng;
            image = concat({ta, tb}, 0);
        } else {
            image = tensor_from_image(read_png(c.single));
        }
        if (image.dim(1) != mask.dim(1) || image.dim(2) != mask.dim(2)) {
            throw DataError("case '" + id + "': image " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1)) + " and mask " + std::to_string(mask.dim(2)) + "x" + std::to_string(mask.dim(1)) + " sizes disagree");
        }
        samples.push_back({id, std::move(image), std::move(mask)});
    }
    for (const auto& [stem, path] : mask_files) {
        if (!cases.count(stem)) throw DataError("mask '" + stem + "' has no matching image");
    }
    return samples;  // std::map iteration already sorted by id
}

std::vector<Sample> synth_generate(const SynthSpec& spec) {
    if (spec.count < 0 || spec.size <= 0 || spec.channels <= 0 || spec.blobs_min < 0 || spec.blobs_max < spec.blobs_min) {
        throw ConfigError("synth_generate: invalid spec");
    }
    const int64_t n = spec.size;
    std::vector<Sample> samples;
    samples.reserve(static_cast<size_t>(spec.count));
    for (int64_t s = 0; s < spec.count; ++s) {
        Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(s)));
        Tensor image = Tensor::full({spec.channels, n, n}, 0.08f);
        Tensor mask = Tensor::zeros({1, n, n});
        float* ip = image.mutable_data();
        float* mp = mask.mutable_data();

        const int blobs = rng.uniform_int(static_cast<int>(spec.blobs_min), static_cast<int>(spec.blobs_max));
        for (int e = 0; e < blobs; ++e) {
            const double cx = rng.uniform(0.15f, 0.85f) * static_cast<double>(n);
            const double cy = rng.uniform(0.15f, 0.85f) * static_cast<double>(n);
            const double ax = rng.uniform(0.08f, 0.25f) * static_cast<double>(n);
            const double ay = rng.uniform(0.08f, 0.25f) * static_cast<double>(n);
            const float bright = rng.uniform(0.65f, 0.95f);
            for (int64_t y = 0; y < n; ++y) {
                for (int64_t x = 0; x < n; ++x) {
                    const double dx = (static_cast<double>(x) - cx) / ax;
                    const double dy = (static_cast<double>(y) - cy) / ay;
                    if (dx * dx + dy * dy <= 1.0) {
                        mp[y * n + x] = 1.0f;
                        for (int64_t c = 0; c < spec.channels; ++c) ip[(c * n + y) * n + x] = bright;
                    }
                }
            }
        }
        if (spec.noise > 0.0f) {
            for (int64_t i = 0; i < spec.channels * n * n; ++i) {
                ip[i] = std::clamp(ip[i] + spec.noise * rng.normal(), 0.0f, 1.0f);
            }
        }
        samples.push_back({"synth" + std::to_string(s), std::move(image), std::move(mask)});
    }
    return samples;
}

namespace {

// Nearest-neighbour plane resize with the same half-pixel convention as
// bilinear_resize; keeps masks strictly binary.
Tensor nearest_resize_mask(const Tensor& mask, int64_t oh, int64_t ow) {
    const int64_t h = mask.dim(1), w = mask.dim(2);
    Tensor out = Tensor::zeros({1, oh, ow});
    float* po = out.mutable_data();
    const float* pm = mask.data();
    for (int64_t y = 0; y < oh; ++y) {
        int64_t sy = static_cast<int64_t>((static_cast<double>(y) + 0.5) * static_cast<double>(h) / static_cast<double>(oh));
        sy = std::clamp<int64_t>(sy, 0, h - 1);
        for (int64_t x = 0; x < ow; ++x) {
            int64_t sx = static_cast<int64_t>((static_cast<double>(x) + 0.5) * static_cast<double>(w) / static_cast<double>(ow));
            sx = std::clamp<int64_t>(sx, 0, w - 1);
            po[y * ow + x] = pm[sy * w + sx];
        }
    }
    return out;
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng) {
    if (cfg.crop <= 0 || cfg.scale_min <= 0.0f || cfg.scale_max < cfg.scale_min) {
        throw ConfigError("augment: invalid scale range or crop size");
    }
    NoGradGuard ng;
    const int64_t h = sample.image.dim(1), w = sample.image.dim(2);
    const float s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const int64_t sh = std::max<int64_t>(1, static_cast<int64_t>(std::lround(static_cast<double>(h) * s)));
    const int64_t sw = std::max<int64_t>(1, static_cast<int64_t>(std::lround(static_cast<double>(w) * s)));

    const int64_t c = sample.image.dim(0);
    Tensor image = reshape(bilinear_resize(reshape(sample.image, {1, c, h, w}), sh, sw), {c, sh, sw});
    Tensor mask = nearest_resize_mask(sample.mask, sh, sw);

    const int64_t ph = std::max<int64_t>(sh, cfg.crop);
    const int64_t pw = std::max<int64_t>(sw, cfg.crop);
    if (ph != sh || pw != sw) {
        image = pad2d(image, 0, pw - sw, 0, ph - sh);
        mask = pad2d(mask, 0, pw - sw, 0, ph - sh);
    }
    const int64_t oy = rng.uniform_int(0, static_cast<int>(ph - cfg.crop));
    const int64_t ox = rng.uniform_int(0, static_cast<int>(pw - cfg.crop));
    image = slice(slice(image, 1, oy, oy + cfg.crop), 2, ox, ox + cfg.crop);
    mask = slice(slice(mask, 1, oy, oy + cfg.crop), 2, ox, ox + cfg.crop);
    return {sample.id, image, mask};
}

SplitResult split(std::vector<Sample> samples, const std::array<double, 3>& ratios, uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-6) throw ConfigError("split: ratios must sum to 1");
    const int64_t n = static_cast<int64_t>(samples.size());
    Rng rng(mix_seed(seed, 0x5eedcafe));
    for (int64_t i = n - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, static_cast<int>(i));
        std::swap(samples[static_cast<size_t>(i)], samples[static_cast<size_t>(j)]);
    }
    const int64_t n_train = static_cast<int64_t>(std::floor(static_cast<double>(n) * ratios[0]));
    const int64_t n_val = static_cast<int64_t>(std::floor(static_cast<double>(n) * ratios[1]));
    const int64_t n_test = n - n_train - n_val;
    if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
        throw ConfigError("split: ratios " + std::to_string(ratios[0]) + ":" + std::to_string(ratios[1]) + ":" + std::to_string(ratios[2]) + " leave an empty split for " + std::to_string(n) + " samples");
    }
    SplitResult out;
    out.train.assign(samples.begin(), samples.begin() + n_train);
    out.val.assign(samples.begin() + n_train, samples.begin() + n_train + n_val);
    out.test.assign(samples.begin() + n_train + n_val, samples.end());
    return out;
}

}  // namespace patcher
