#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/random/normal_distribution.hpp>
#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "discrete.hpp"
#include "fibretrap/rng.hpp"

namespace fibretrap::servo {

namespace {

double const two_pi = 2 * std::numbers::pi;

double tail_std(std::vector<double> const& v)
{
    auto const first = static_cast<std::size_t>(settle_fraction * static_cast<double>(v.size()));
    double mean = 0;
    for (std::size_t i = first; i < v.size(); ++i)
        mean += v[i];
    double const n = static_cast<double>(v.size() - first);
    mean /= n;
    double ss = 0;
    for (std::size_t i = first; i < v.size(); ++i)
        ss += (v[i] - mean) * (v[i] - mean);
    return std::sqrt(ss / n);
}

}  // namespace

NoiseModel NoiseModel::reference()
{
    return {0.043, 5, 0.01};
}

void LockResult::write_csv(std::ostream& os, std::size_t stride) const
{
    os << "t_s,error_linewidths\n";
    stride = std::max<std::size_t>(stride, 1);
    for (std::size_t i = 0; i < residual.size(); i += stride)
        os << fmt::format("{:.9g},{:.9g}\n", static_cast<double>(i) / sample_rate, residual[i]);
}

LockResult simulate_lock(PlantModel const& plant,
                         LoopFilter const& filter,
                         double linewidth_nm,
                         NoiseModel const& noise,
                         double duration,
                         std::uint64_t seed,
                         bool closed_loop,
                         std::size_t block_size)
{
    plant.validate();
    filter.validate(&plant);
    if (!(linewidth_nm > 0))
        throw ServoError("linewidth must be positive");
    if (!(duration > 0) || block_size == 0)
        throw ServoError("duration and block size must be positive");
    if (!(noise.vibration_rms_nm >= 0) || !(noise.sensor_rms >= 0) || !(noise.vibration_corner_hz > 0))
        throw ServoError("noise levels must be non-negative and the corner positive");

    double const fs = filter.sample_rate;
    auto const n = static_cast<std::size_t>(std::llround(duration * fs));
    auto plant_sim = detail::discretize(plant, fs);
    detail::Controller ctrl(filter);
    Rng rng = stream_rng(seed, 0, 0x6c6f636b);
    boost::random::normal_distribution<double> normal;

    // Exact Ornstein-Uhlenbeck update for the disturbance, started stationary.
    double const rho = std::exp(-two_pi * noise.vibration_corner_hz / fs);
    double const kick = noise.vibration_rms_nm * std::sqrt(1 - rho * rho);
    double d = noise.vibration_rms_nm * normal(rng);

    LockResult out;
    out.sample_rate = fs;
    out.closed_loop = closed_loop;
    out.residual.resize(n);
    std::vector<double> dist(block_size), sens(block_size);
    double u = 0;
    for (std::size_t start = 0; start < n; start += block_size)
    {
        std::size_t const len = std::min(block_size, n - start);
        for (std::size_t i = 0; i < len; ++i)
        {
            dist[i] = normal(rng);
            sens[i] = normal(rng);
        }
        for (std::size_t i = 0; i < len; ++i)
        {
            double const y = closed_loop ? plant_sim.step(u) : 0.0;
            double const x = (d + y) / linewidth_nm;
            out.residual[start + i] = x;
            if (!std::isfinite(x) || (closed_loop && std::abs(x) > lost_lock_linewidths))
            {
                throw ServoError(fmt::format("lock diverged at t = {:.6g} s",
                                             static_cast<double>(start + i) / fs));
            }
            double const e = std::clamp(x, -0.5, 0.5) + noise.sensor_rms * sens[i];
            u = closed_loop ? -ctrl.step(e) : 0.0;
            d = rho * d + kick * dist[i];
        }
    }
    out.residual_std = tail_std(out.residual);
    return out;
}

double suppression_db(LockResult const& open, LockResult const& closed, double f_max, std::size_t segment)
{
    if (open.residual.size() != closed.residual.size() || open.sample_rate != closed.sample_rate)
        throw ServoError("open and closed traces must share length and rate");
    auto const first = static_cast<std::size_t>(settle_fraction * static_cast<double>(open.residual.size()));
    if (open.residual.size() - first < segment)
        throw ServoError("trace too short for the Welch segment");
    double const df = open.sample_rate / static_cast<double>(segment);
    auto const top = static_cast<std::size_t>(std::floor(f_max / df));
    if (top < 1)
        throw ServoError("Welch resolution too coarse for the band");

    Eigen::FFT<double> fft;
    auto band_power = [&](std::vector<double> const& v) {
        std::vector<double> buf(segment);
        std::vector<std::complex<double>> spec;
        double total = 0;
        for (std::size_t s = first; s + segment <= v.size(); s += segment / 2)
        {
            double mean = 0;
            for (std::size_t i = 0; i < segment; ++i)
                mean += v[s + i];
            mean /= static_cast<double>(segment);
            for (std::size_t i = 0; i < segment; ++i)
            {
                double const w = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(segment));
                buf[i] = w * (v[s + i] - mean);
            }
            fft.fwd(spec, buf);
            for (std::size_t k = 1; k <= top; ++k)
                total += std::norm(spec[k]);
        }
        return total;
    };
    return 10 * std::log10(band_power(open.residual) / band_power(closed.residual));
}

cplx measured_chain_response(PlantModel const& plant, LoopFilter const& filter, double f_hz)
{
    filter.validate(&plant);
    double const fs = filter.sample_rate;
    if (!(f_hz > 0) || !(f_hz < fs / 2))
        throw ServoError("probe frequency must lie in (0, fs/2)");
    auto plant_sim = detail::discretize(plant, fs);
    detail::Controller ctrl(filter);
    // Settle 50 ms, then project over a whole number of cycles spanning ~50 ms.
    auto const settle = static_cast<std::size_t>(0.05 * fs);
    double const cycles = std::max(1.0, std::round(0.05 * f_hz));
    auto const span = static_cast<std::size_t>(std::llround(cycles * fs / f_hz));
    double const w = two_pi * f_hz / fs;
    double u = 0;
    cplx in = 0, out = 0;
    for (std::size_t i = 0; i < settle + span; ++i)
    {
        double const x = std::cos(w * static_cast<double>(i));
        double const y = plant_sim.step(u);
        u = ctrl.step(x);
        if (i >= settle)
        {
            cplx const ph = std::polar(1.0, -w * static_cast<double>(i));
            in += x * ph;
            out += y * ph;
        }
    }
    return out / in;
}

void write_bode_csv(std::ostream& os,
                    PlantModel const& plant,
                    LoopFilter const& filter,
                    double linewidth_nm,
                    double f_lo,
                    double f_hi,
                    int points)
{
    if (!(f_lo > 0) || !(f_hi > f_lo) || points < 2)
        throw ServoError("Bode grid needs 0 < f_lo < f_hi and at least two points");
    os << "f_Hz,mag_dB,phase_deg\n";
    for (int i = 0; i < points; ++i)
    {
        double const f = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / (points - 1));
        cplx const h = open_loop_response(plant, filter, linewidth_nm, f);
        os << fmt::format("{:.9g},{:.9g},{:.9g}\n", f, 20 * std::log10(std::abs(h)),
                          std::arg(h) * 180 / std::numbers::pi);
    }
}

}  // namespace fibretrap::servo
