#include <cmath>
#include <ostream>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <fmt/format.h>

#include "fibretrap/optics.hpp"

namespace fibretrap::optics {

void PhotonStream::validate() const
{
    if (!(t_end >= t_start))
        throw OpticsError("photon window end precedes its start");
    for (std::size_t i = 0; i < arrivals.size(); ++i)
    {
        if (arrivals[i] < t_start || arrivals[i] > t_end)
            throw OpticsError("photon arrival outside its window");
        if (i > 0 && !(arrivals[i] > arrivals[i - 1]))
            throw OpticsError("photon arrivals are not strictly increasing");
    }
}

void PhotonStream::write_csv(std::ostream& os) const
{
    os << "arrival_s\n";
    for (double t : arrivals)
        os << fmt::format("{:.15g}\n", t);
}

PhotonStream sample_photon_arrivals(RateFn const& rate,
                                    double t_start,
                                    double t_end,
                                    double rate_cap,
                                    Rng& rng)
{
    if (!(t_end >= t_start))
        throw OpticsError("photon window end precedes its start");
    if (!(rate_cap >= 0) || !std::isfinite(rate_cap))
        throw OpticsError("rate cap must be finite and non-negative");
    PhotonStream out;
    out.t_start = t_start;
    out.t_end = t_end;
    if (rate_cap == 0)
        return out;
    boost::random::exponential_distribution<double> gap(rate_cap);
    boost::random::uniform_01<double> uniform;
    double t = t_start;
    while (true)
    {
        t += gap(rng);
        if (t > t_end)
            break;
        double const r = rate(t);
        if (!(r >= 0) || r > rate_cap * (1 + 1e-12))
        {
            throw OpticsError(fmt::format(
                "rate {:.6g}/s at t = {:.6g} s violates the thinning cap {:.6g}/s", r, t, rate_cap));
        }
        if (uniform(rng) * rate_cap < r && (out.arrivals.empty() || t > out.arrivals.back()))
            out.arrivals.push_back(t);
    }
    return out;
}

PhotonStream sample_photon_arrivals(RateFn const& rate,
                                    double t_start,
                                    double t_end,
                                    double rate_cap,
                                    std::uint64_t seed)
{
    Rng rng = stream_rng(seed, 0, 0x70686f74);
    return sample_photon_arrivals(rate, t_start, t_end, rate_cap, rng);
}

}  // namespace fibretrap::optics
