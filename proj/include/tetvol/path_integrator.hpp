#pragma once

// Shared core of the tet-grid renderer and the regular-grid reference renderer.
// Both provide a Marcher with the same interface, so the two renderers differ
// only in how they enumerate piecewise-constant cells along a ray:
//
//   bool start(const Ray& ray);        reset and clip; false = ray misses the volume
//   std::optional<MarchStep> next();   advance one cell; nullopt = escaped (or aborted)
//   void shorten(double dist);         collision `dist` into the last step
//   void redirect(const Vec3& dir);    continue from the collision point, new direction
//   Vec3 position() const;             current event point (collision or escape)
//   Vec3 direction() const;
//   MediaPayload media() const;        media of the last stepped cell
//   bool aborted() const;
//
// Keeping one integrator guarantees both renderers consume random dimensions
// in lockstep: per camera sample, dims 1-2 are the pixel jitter, then each
// bounce draws 1 (free path) [+1 Russian roulette when active] + 2 (phase).

#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <thread>
#include <vector>

#include "tetvol/camera.hpp"
#include "tetvol/geometry.hpp"
#include "tetvol/image.hpp"
#include "tetvol/rng.hpp"
#include "tetvol/tracer.hpp"

namespace tetvol::detail {

struct MarchStep {
    double t0 = 0.0;       // global ray parameters of the cell crossing
    double t1 = 0.0;
    double lambda = 0.0;   // extinction inside the cell
    std::uint32_t cell = 0;
};

template <class Marcher>
Vec3 trace_path(Marcher& m, const Ray& primary, const RenderConfig& cfg, RngStream& rng, TraceStats& st) {
    Vec3 radiance{0, 0, 0};
    Vec3 throughput{1, 1, 1};
    if (!m.start(primary)) return cfg.environment;

    for (int bounce = 0;;) {
        const double target_tau = -std::log(1.0 - rng.next());
        double tau = 0.0;
        bool collided = false;
        while (auto step = m.next()) {
            ++st.cells_visited;
            const double seg_tau = step->lambda * (step->t1 - step->t0);
            if (step->lambda > 0.0 && tau + seg_tau >= target_tau) {
                m.shorten((target_tau - tau) / step->lambda);
                collided = true;
                break;
            }
            tau += seg_tau;
        }
        if (m.aborted()) {
            ++st.degenerate_paths;
            return radiance;
        }
        if (!collided) return radiance + throughput * cfg.environment;

        const MediaPayload media = m.media();
        if (media.has_temperature())
            radiance += throughput * emission_color(media.temperature) * cfg.emission_scale;
        throughput *= media.has_albedo() ? media.albedo : cfg.default_albedo;

        ++bounce;
        if (bounce >= cfg.max_bounces) return radiance;
        if (bounce >= 4) {
            const double p = max_component(throughput);
            if (p < 1e-3) {
                if (rng.next() >= p) return radiance;
                throughput = throughput / p;
            }
        }
        m.redirect(sample_phase_hg(m.direction(), cfg.hg_g, rng));
    }
}

// MarcherFactory: callable returning a fresh Marcher (one per worker thread).
template <class MarcherFactory>
ImageAccumulator render_image(const MarcherFactory& make_marcher, const PinholeCamera& cam,
                              const RenderConfig& cfg, int threads) {
    cfg.validate();
    const auto t_begin = std::chrono::steady_clock::now();

    ImageAccumulator acc(cam.width(), cam.height());
    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min(n_threads, cam.height());

    std::atomic<int> next_row{0};
    std::vector<TraceStats> thread_stats(static_cast<std::size_t>(n_threads));

    auto worker = [&](int tid) {
        auto marcher = make_marcher();
        TraceStats& st = thread_stats[static_cast<std::size_t>(tid)];
        for (;;) {
            const int y = next_row.fetch_add(1);
            if (y >= cam.height()) break;
            for (int x = 0; x < cam.width(); ++x) {
                const std::uint64_t pixel = static_cast<std::uint64_t>(y) * cam.width() + x;
                for (int s = 0; s < cfg.spp; ++s) {
                    RngStream rng(cfg.seed, pixel, static_cast<std::uint64_t>(s));
                    const double jx = rng.next();
                    const double jy = rng.next();
                    const Ray ray = cam.primary_ray(x, y, jx, jy);
                    acc.add_sample(x, y, trace_path(marcher, ray, cfg, rng, st));
                }
            }
        }
    };

    if (n_threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }

    for (const TraceStats& st : thread_stats) {
        acc.cells_visited += st.cells_visited;
        acc.degenerate_paths += st.degenerate_paths;
    }
    acc.paths_traced = static_cast<std::uint64_t>(cam.width()) * cam.height() * cfg.spp;
    acc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return acc;
}

}  // namespace tetvol::detail
