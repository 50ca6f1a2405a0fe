#include "ovlm/vision.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "ovlm/blocks.hpp"

namespace ovlm {

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open image '" + path + "'");
    std::string magic;
    f >> magic;
    if (magic != "P6") throw InputError("'" + path + "' is not a binary PPM (P6) file");
    // Header tokens may be separated by whitespace and '#' comments.
    auto next_int = [&f, &path]() {
        int c;
        while ((c = f.get()) != EOF) {
            if (c == '#') {
                while ((c = f.get()) != EOF && c != '\n') {}
            } else if (!std::isspace(c)) {
                f.unget();
                break;
            }
        }
        int v;
        if (!(f >> v)) throw InputError("truncated PPM header in '" + path + "'");
        return v;
    };
    Image img;
    img.width = next_int();
    img.height = next_int();
    int maxval = next_int();
    if (img.width <= 0 || img.height <= 0) throw InputError("bad PPM dimensions in '" + path + "'");
    if (maxval != 255) throw InputError("PPM maxval must be 255 in '" + path + "'");
    f.get();  // single whitespace after maxval
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw InputError("truncated PPM pixel data in '" + path + "'");
    }
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write image '" + path + "'");
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

Tensor patchify(const Image& img, const VisionConfig& cfg) {
    if (img.width != cfg.image_size || img.height != cfg.image_size) {
        throw InputError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " but config expects " + std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.image_size));
    }
    const int grid = cfg.grid();
    const int ps = cfg.patch_size;
    Tensor out({1, cfg.seq_len(), cfg.patch_dim()});
    real* op = out.data();
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            real* patch = op + static_cast<int64_t>(gy * grid + gx) * cfg.patch_dim();
            int i = 0;
            for (int py = 0; py < ps; ++py) {
                for (int px = 0; px < ps; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        patch[i++] =
                            real(img.at(gx * ps + px, gy * ps + py, c)) / real(127.5) - real(1);
                    }
                }
            }
        }
    }
    return out;
}

Tensor vision_encode(const Image& img, const VisionConfig& cfg, const Weights& w, Graph* g) {
    const int S = cfg.seq_len();
    Tensor patches = reshape(patchify(img, cfg), {S, cfg.patch_dim()}, g);
    Tensor x = add_broadcast(matmul(patches, w.at("vision.patch_embed.w"), g),
                             w.at("vision.patch_embed.b"), g);
    x = add(x, w.at("vision.pos"), g);
    const real eps = real(1e-5);
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "vision.blocks." + std::to_string(i) + ".";
        Tensor h = layernorm(x, w.at(p + "ln1.g"), w.at(p + "ln1.b"), eps, g);
        Tensor attn = multihead_attention(h, w.at(p + "wq"), w.at(p + "wk"), w.at(p + "wv"),
                                          w.at(p + "wo"), cfg.n_heads, /*causal=*/false,
                                          /*rope_theta=*/real(0), 0, g);
        x = add(x, attn, g);
        Tensor m = layernorm(x, w.at(p + "ln2.g"), w.at(p + "ln2.b"), eps, g);
        m = add_broadcast(matmul(m, w.at(p + "fc1.w"), g), w.at(p + "fc1.b"), g);
        m = gelu(m, g);
        m = add_broadcast(matmul(m, w.at(p + "fc2.w"), g), w.at(p + "fc2.b"), g);
        x = add(x, m, g);
    }
    x = layernorm(x, w.at("vision.ln_f.g"), w.at("vision.ln_f.b"), eps, g);
    return reshape(x, {1, S, cfg.d_vision}, g);
}

namespace {

struct NamedColor {
    const char* name;
    uint8_t r, g, b;
};
constexpr NamedColor kColors[] = {
    {"red", 220, 40, 40}, {"green", 40, 200, 60}, {"blue", 50, 80, 230}, {"yellow", 230, 210, 40}};
constexpr const char* kShapes[] = {"square", "circle", "stripes", "cross"};

}  // namespace

SyntheticSample make_synthetic_sample(int image_size, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SyntheticSample s;
    s.color_id = static_cast<int>(rng() % 4);
    s.shape_id = static_cast<int>(rng() % 4);
    const NamedColor col = kColors[s.color_id];
    // Fixed-width fields keep every caption position aligned across samples,
    // which makes the captions a much better-conditioned training target for
    // the tiny models this generator feeds.
    auto pad = [](std::string t, size_t width) {
        t.resize(width, ' ');
        return t;
    };
    s.caption = std::string("a ") + pad(col.name, 6) + " " + pad(kShapes[s.shape_id], 12);

    Image& img = s.image;
    img.width = img.height = image_size;
    img.pixels.assign(static_cast<size_t>(image_size) * image_size * 3, 16);
    // Textured background: without it every background patch embeds to nearly
    // the same vector, which makes the patch sequence a poor conditioning
    // signal for the projector.
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            const uint64_t h = fnv1a(std::to_string(x) + "," + std::to_string(y));
            for (int ch = 0; ch < 3; ++ch) {
                img.at(x, y, ch) = static_cast<uint8_t>(8 + ((h >> (8 * ch)) & 63));
            }
        }
    }
    const int c = image_size / 2;
    const int half = image_size / 4;
    auto put = [&](int x, int y) {
        if (x >= 0 && x < image_size && y >= 0 && y < image_size) {
            img.at(x, y, 0) = col.r;
            img.at(x, y, 1) = col.g;
            img.at(x, y, 2) = col.b;
        }
    };
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            const int dx = x - c, dy = y - c;
            bool on = false;
            switch (s.shape_id) {
                case 0: on = std::abs(dx) <= half && std::abs(dy) <= half; break;
                case 1: on = dx * dx + dy * dy <= half * half; break;
                case 2: on = std::abs(dx) <= half && std::abs(dy) <= half && ((y / 8) % 2 == 0); break;
                case 3:
                    on = (std::abs(dx) <= half / 3 && std::abs(dy) <= half) ||
                         (std::abs(dy) <= half / 3 && std::abs(dx) <= half);
                    break;
            }
            if (on) put(x, y);
        }
    }
    return s;
}

void write_synthetic_dataset(const std::string& out_dir, int count, int image_size, uint64_t seed) {
    if (count < 1) throw InputError("dataset count must be >= 1");
    std::filesystem::create_directories(out_dir);
    std::ofstream jsonl(out_dir + "/captions.jsonl");
    if (!jsonl) throw InputError("cannot write '" + out_dir + "/captions.jsonl'");
    for (int i = 0; i < count; ++i) {
        SyntheticSample s = make_synthetic_sample(image_size, seed + static_cast<uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
        const std::string path = out_dir + "/" + name;
        write_ppm(path, s.image);
        nlohmann::json rec = {
            {"image", path}, {"prompt", "describe the image"}, {"response", s.caption}};
        jsonl << rec.dump() << "\n";
    }
}

}  // namespace ovlm
