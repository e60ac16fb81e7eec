#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace fibretrap::servo {

using cplx = std::complex<double>;

class ServoError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/*!
 * Mechanical resonance as a pole pair at `frequency_hz` with a zero pair at
 * frequency_hz * (1 + coupling), both with quality factor q. Positive
 * coupling gives a gain peak followed by a notch with a sharp phase drop.
 */
struct Resonance
{
    double frequency_hz = 0;
    double q = 0;
    double coupling = 0;
};

enum class Piezo
{
    multilayer,
    monolayer,
};

// Actuator stroke in nm/V: 1.5 for the multilayer, 0.45 for the monolayer.
double actuator_stroke(Piezo p);

struct PlantModel
{
    std::vector<Resonance> resonances;
    double dc_gain = 1.5;      //!< nm/V
    double rolloff_hz = 30e3;  //!< first-order driver pole; 0 disables

    void validate() const;
    // Resonances at 900 Hz and 9 kHz on the multilayer piezo.
    static PlantModel reference();
};

// Continuous-time response in nm/V.
cplx plant_frequency_response(PlantModel const& plant, double f_hz);

//! Direct-form biquad, y = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2) x.
struct Biquad
{
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

    cplx response(double f_hz, double sample_rate) const;
    bool stable() const;
};

/*!
 * One compensation stage: g_lp LP + g_bp BP + g_hp HP sharing corner f0 and
 * quality factor q. Unit gains sum to a flat response; other weights place
 * zeros anywhere, so a stage can invert a plant resonance.
 */
struct FilterStage
{
    double f0_hz = 0;
    double q = 0.7071067811865476;
    double g_lp = 0;
    double g_bp = 0;
    double g_hp = 0;
};

struct FilterSpec
{
    std::vector<FilterStage> stages;
    double kp = 0;  //!< V per linewidth
    double ki = 0;  //!< V per linewidth per second
    double sample_rate = 1e6;
};

struct LoopFilter
{
    std::vector<Biquad> sections;
    double sample_rate = 1e6;
    double kp = 0;
    double ki = 0;

    // PI (bilinear) times all sections, evaluated on the unit circle.
    cplx response(double f_hz) const;
    void validate(PlantModel const* plant = nullptr) const;
};

LoopFilter compose_loop_filter(FilterSpec const& spec);

// Compensation used for the reference plant: inverse stages for both
// resonances plus a 20 kHz low-pass, PI crossover near 4 kHz.
FilterSpec reference_filter_spec();

// Lock-laser linewidth expressed as cavity length change, in nm.
double linewidth_length_nm(double cavity_length, double wavelength, double linewidth_hz);

// plant x filter x one-sample delay / linewidth; dimensionless.
cplx open_loop_response(PlantModel const& plant,
                        LoopFilter const& filter,
                        double linewidth_nm,
                        double f_hz);

struct Margins
{
    double gain_margin_db = 0;
    double phase_margin_deg = 0;
    double unity_gain_hz = 0;
};

/*!
 * Margins on a log grid from 0.1 Hz to 0.45 fs with bisection at
 * crossings. The phase margin is the worst over all unity crossings; the
 * gain margin is the smallest over phase crossovers above the highest unity
 * crossing.
 */
Margins loop_margins(PlantModel const& plant, LoopFilter const& filter, double linewidth_nm);

struct NoiseModel
{
    double vibration_rms_nm = 0;     //!< std of the length disturbance
    double vibration_corner_hz = 5;  //!< Lorentzian corner
    double sensor_rms = 0;           //!< white error-signal noise, linewidths per sample

    // Invented levels tuned so the reference loop sits just inside the
    // one-thirteenth-linewidth lock target.
    static NoiseModel reference();
};

struct LockResult
{
    double sample_rate = 0;
    std::vector<double> residual;  //!< linewidths
    double residual_std = 0;       //!< after the settling fraction
    bool closed_loop = true;

    // Columns t_s, error_linewidths.
    void write_csv(std::ostream& os, std::size_t stride = 1) const;
};

inline constexpr double settle_fraction = 0.05;
// The clipped discriminant turns runaway into linear drift, so an excursion
// this far past the linear range counts as divergence.
inline constexpr double lost_lock_linewidths = 1e3;

/*!
 * Discrete-time lock at the filter's sample rate. The discriminant is
 * linear within half a linewidth and clipped beyond; the controller output
 * reaches the plant one sample later. With closed_loop false the actuator is
 * idle and the residual is the raw disturbance. Noise is generated in blocks
 * from one stream, so results do not depend on block_size.
 */
LockResult simulate_lock(PlantModel const& plant,
                         LoopFilter const& filter,
                         double linewidth_nm,
                         NoiseModel const& noise,
                         double duration,
                         std::uint64_t seed,
                         bool closed_loop = true,
                         std::size_t block_size = 65536);

// Welch PSD ratio open/closed summed over (0, f_max], in dB.
double suppression_db(LockResult const& open,
                      LockResult const& closed,
                      double f_max,
                      std::size_t segment = 1 << 17);

// Filter-delay-plant chain driven by a sinusoid in the time domain;
// complex ratio of plant output to filter input (nm per linewidth).
cplx measured_chain_response(PlantModel const& plant, LoopFilter const& filter, double f_hz);

// Columns f_Hz, mag_dB, phase_deg of the open loop on a log grid.
void write_bode_csv(std::ostream& os,
                    PlantModel const& plant,
                    LoopFilter const& filter,
                    double linewidth_nm,
                    double f_lo,
                    double f_hi,
                    int points);

}  // namespace fibretrap::servo
