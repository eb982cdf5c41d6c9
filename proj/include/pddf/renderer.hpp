#pragma once

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pddf/evaluator.hpp"
#include "pddf/field.hpp"
#include "pddf/parallel.hpp"

namespace pddf {

struct Camera {
    Vec3 position{0, 0, 3};
    Vec3 look_at{0, 0, 0};
    Vec3 up{0, 1, 0};
    double vertical_fov_deg = 50.0;
    int width = 128;
    int height = 128;
};

template <typename T>
struct Image {
    int width = 0, height = 0;
    std::vector<T> pixels;

    Image() = default;
    Image(int w, int h, T fill = T{}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
    T& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

using DepthImage = Image<float>;       // +inf where not visible
using VisibilityImage = Image<float>;  // xi in [0,1]

struct NormalPixel {
    bool defined = false;
    Vec3 n{};
};
using NormalImage = Image<NormalPixel>;

struct CurvaturePixel {
    bool defined = false;
    float mean = 0.0f;
    float gaussian = 0.0f;
};
using CurvatureImage = Image<CurvaturePixel>;

/// Right-handed look-at frame; rays go through pixel centres, top-left
/// origin, square pixels.
inline std::vector<OrientedPoint> camera_rays(const Camera& cam) {
    Vec3 fwd = cam.look_at - cam.position;
    if (fwd.norm() == 0.0) throw std::invalid_argument("camera position equals look_at");
    fwd = fwd.normalized();
    Vec3 right = fwd.cross(cam.up);
    if (right.norm() < 1e-12) throw std::invalid_argument("camera up is parallel to the view axis");
    right = right.normalized();
    Vec3 up = right.cross(fwd);
    if (cam.vertical_fov_deg <= 0.0 || cam.vertical_fov_deg >= 180.0)
        throw std::invalid_argument("vertical fov must be in (0, 180) degrees");
    const double tan_half = std::tan(cam.vertical_fov_deg * M_PI / 360.0);
    const double aspect = static_cast<double>(cam.width) / cam.height;

    std::vector<OrientedPoint> rays;
    rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double sx = ((x + 0.5) / cam.width * 2.0 - 1.0) * tan_half * aspect;
            double sy = (1.0 - (y + 0.5) / cam.height * 2.0) * tan_half;
            Vec3 dir = (fwd + right * sx + up * sy).normalized();
            rays.push_back({cam.position, dir});
        }
    }
    return rays;
}

/// Depth and visibility with exactly one evaluator query per pixel whose ray
/// reaches the domain box; cameras outside the box use the boundary-entry
/// rule and add the walked distance.
inline std::pair<DepthImage, VisibilityImage> render_depth_visibility(
    const FieldEvaluator& field, const Camera& cam, double xi_threshold = 0.5,
    int threads = 0, const BoundingBox& box = {}) {
    auto rays = camera_rays(cam);
    DepthImage depth(cam.width, cam.height, std::numeric_limits<float>::infinity());
    VisibilityImage xi(cam.width, cam.height, 0.0f);
    const bool inside = box.contains(cam.position);
    const int nthreads = threads > 0 ? threads : hardware_threads();

    parallel_chunks(rays.size(), 1024, nthreads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            FieldOutput out;
            if (inside) {
                out = field.evaluate(rays[i]);
            } else {
                auto entry = ray_box_entry(rays[i].p, rays[i].v, box);
                if (!entry) continue;  // ray misses the domain: xi = 0, depth inf
                out = field.evaluate({*entry, rays[i].v});
                const double walked = (*entry - rays[i].p).norm();
                out.d[0] += walked;
                out.d[1] += walked;
            }
            xi.pixels[i] = static_cast<float>(out.xi);
            if (out.xi >= xi_threshold)
                depth.pixels[i] = static_cast<float>(out.depth());
        }
    });
    return {std::move(depth), std::move(xi)};
}

/// Per-pixel field normals where predicted visibility clears the threshold;
/// one jet query per defined pixel, sentinel elsewhere.
inline NormalImage render_normals(const FieldEvaluator& field, const Camera& cam,
                                  double xi_threshold = 0.5, int threads = 0,
                                  const BoundingBox& box = {}) {
    if (!field.supports_jets()) throw std::invalid_argument("normal rendering needs jet support");
    auto rays = camera_rays(cam);
    NormalImage img(cam.width, cam.height);
    const bool inside = box.contains(cam.position);
    const int nthreads = threads > 0 ? threads : hardware_threads();

    parallel_chunks(rays.size(), 512, nthreads, [&](std::size_t, std::size_t b, std::size_t e) {
        JetRequest want;
        for (std::size_t i = b; i < e; ++i) {
            OrientedPoint q = rays[i];
            if (!inside) {
                auto entry = ray_box_entry(q.p, q.v, box);
                if (!entry) continue;
                q.p = *entry;
            }
            FieldJet jet = field.evaluate_jet(q, want);
            if (jet.out.xi < xi_threshold) continue;
            auto n = surface_normal_estimate(jet, q.v);
            if (!n) continue;  // degenerate: near-silhouette pixel
            img.pixels[i] = {true, *n};
        }
    });
    return img;
}

/// Mean and Gaussian curvature per visible pixel via second directional
/// derivatives over a per-pixel tangent frame.
inline CurvatureImage render_curvature(const FieldEvaluator& field, const Camera& cam,
                                       double xi_threshold = 0.5, int threads = 0,
                                       const BoundingBox& box = {},
                                       std::uint64_t frame_seed = 0) {
    if (!field.supports_jets()) throw std::invalid_argument("curvature rendering needs jet support");
    auto rays = camera_rays(cam);
    CurvatureImage img(cam.width, cam.height);
    const bool inside = box.contains(cam.position);
    const int nthreads = threads > 0 ? threads : hardware_threads();

    parallel_chunks(rays.size(), 256, nthreads, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        Rng rng = Rng::derive(frame_seed, chunk);
        for (std::size_t i = b; i < e; ++i) {
            OrientedPoint q = rays[i];
            if (!inside) {
                auto entry = ray_box_entry(q.p, q.v, box);
                if (!entry) continue;
                q.p = *entry;
            }
            FieldJet probe = field.evaluate_jet(q, {});
            if (probe.out.xi < xi_threshold) continue;
            auto n = surface_normal_estimate(probe, q.v);
            if (!n) continue;
            auto [tx, ty] = tangent_basis(*n, rng);
            JetRequest want;
            want.second_pairs = {{tx, tx}, {tx, ty}, {ty, tx}, {ty, ty}};
            FieldJet jet = field.evaluate_jet(q, want);
            auto curv = curvature_at(jet, *n, q.v);
            if (!curv) continue;
            img.pixels[i] = {true, static_cast<float>(curv->mean),
                             static_cast<float>(curv->gaussian)};
        }
    });
    return img;
}

// ---------------------------------------------------------------------------
// Image files: PFM for scalar maps (little-endian, scale -1), PNG for normals.

inline void write_pfm(const Image<float>& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open PFM for writing: " + path);
    out << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
    // PFM stores rows bottom-to-top
    for (int y = img.height - 1; y >= 0; --y)
        out.write(reinterpret_cast<const char*>(&img.at(0, y)),
                  static_cast<std::streamsize>(img.width * sizeof(float)));
    if (!out) throw std::runtime_error("PFM write failed: " + path);
}

inline Image<float> read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open PFM: " + path);
    std::string magic;
    in >> magic;
    if (magic != "Pf") throw std::runtime_error("unsupported PFM header: " + path);
    int w, h;
    double scale;
    in >> w >> h >> scale;
    in.get();  // single whitespace after the scale line
    if (scale >= 0) throw std::runtime_error("big-endian PFM not supported: " + path);
    Image<float> img(w, h);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(&img.at(0, y)),
                static_cast<std::streamsize>(w * sizeof(float)));
        if (!in) throw std::runtime_error("PFM payload truncated: " + path);
    }
    return img;
}

/// n -> (n+1)/2 mapped to 8-bit with round-half-up; undefined pixels black.
inline std::vector<std::uint8_t> encode_normal_rgb(const NormalImage& img) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.width) * img.height * 3, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const auto& px = img.pixels[i];
        if (!px.defined) continue;
        for (int c = 0; c < 3; ++c) {
            double v = (px.n[c] + 1.0) * 0.5 * 255.0;
            long q = std::lround(v);
            rgb[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
        }
    }
    return rgb;
}

namespace detail {

inline void png_chunk(std::string& out, const char type[4], const std::string& data) {
    auto be32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
        out.append(b, 4);
    };
    be32(static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.append(type, 4);
    out += data;
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
              static_cast<uInt>(out.size() - crc_start)));
    be32(crc);
}

}  // namespace detail

/// Minimal 8-bit RGB PNG writer (zlib-compressed, no interlace).
inline void write_png_rgb(const std::vector<std::uint8_t>& rgb, int width, int height,
                          const std::string& path) {
    std::string png("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    auto be32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
        ihdr.append(b, 4);
    };
    be32(static_cast<std::uint32_t>(width));
    be32(static_cast<std::uint32_t>(height));
    ihdr += '\x08';  // bit depth
    ihdr += '\x02';  // colour type: truecolour
    ihdr += '\x00';  // compression
    ihdr += '\x00';  // filter
    ihdr += '\x00';  // no interlace
    detail::png_chunk(png, "IHDR", ihdr);

    std::string raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw += '\x00';  // filter: none
        raw.append(reinterpret_cast<const char*>(rgb.data() + static_cast<std::size_t>(y) * width * 3),
                   static_cast<std::size_t>(width) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string idat(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("PNG compression failed");
    idat.resize(bound);
    detail::png_chunk(png, "IDAT", idat);
    detail::png_chunk(png, "IEND", "");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open PNG for writing: " + path);
    out.write(png.data(), static_cast<std::streamsize>(png.size()));
    if (!out) throw std::runtime_error("PNG write failed: " + path);
}

struct RenderOutputs {
    bool wrote_depth = false, wrote_xi = false, wrote_normals = false,
         wrote_curvature = false;
};

/// Writes the selected maps under `stem`: stem.depth.pfm, stem.xi.pfm,
/// stem.normals.png, stem.curvH.pfm / stem.curvK.pfm.
inline RenderOutputs write_images(const std::string& stem, const DepthImage* depth,
                                  const VisibilityImage* xi, const NormalImage* normals,
                                  const CurvatureImage* curvature) {
    RenderOutputs out;
    if (depth) {
        write_pfm(*depth, stem + ".depth.pfm");
        out.wrote_depth = true;
    }
    if (xi) {
        write_pfm(*xi, stem + ".xi.pfm");
        out.wrote_xi = true;
    }
    if (normals) {
        write_png_rgb(encode_normal_rgb(*normals), normals->width, normals->height,
                      stem + ".normals.png");
        out.wrote_normals = true;
    }
    if (curvature) {
        Image<float> h(curvature->width, curvature->height,
                       std::numeric_limits<float>::infinity());
        Image<float> k(curvature->width, curvature->height,
                       std::numeric_limits<float>::infinity());
        for (std::size_t i = 0; i < curvature->pixels.size(); ++i) {
            if (curvature->pixels[i].defined) {
                h.pixels[i] = curvature->pixels[i].mean;
                k.pixels[i] = curvature->pixels[i].gaussian;
            }
        }
        write_pfm(h, stem + ".curvH.pfm");
        write_pfm(k, stem + ".curvK.pfm");
        out.wrote_curvature = true;
    }
    return out;
}

}  // namespace pddf
