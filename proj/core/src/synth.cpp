#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "msw/data.hpp"
#include "msw/errors.hpp"
#include "msw/tensor.hpp"

namespace msw {
namespace {

constexpr double kTWaveAmplitude = 0.3;
constexpr double kTWaveOffset = 10.0;  // samples after the main pulse
constexpr double kTWaveWidth = 4.0;

const char* const kClassNames[] = {"WIDE", "AMP", "SLOW"};

double gaussian(double t, double centre, double sigma) {
  const double z = (t - centre) / sigma;
  return std::exp(-0.5 * z * z);
}

// Alternating polarity with decreasing gain, so leads are distinguishable.
double lead_gain(std::size_t lead, std::size_t leads) {
  const double magnitude = 1.0 - 0.5 * static_cast<double>(lead) / static_cast<double>(leads);
  return lead % 2 == 0 ? magnitude : -magnitude;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.classes == 0 || spec.records == 0) {
    throw DataError("synthetic dataset needs at least one class and one record");
  }
  if (spec.classes > 3) throw DataError("synthetic generator defines motifs for at most 3 classes");
  if (spec.n_leads == 0 || spec.seq_len == 0) throw DataError("synthetic record shape is empty");
  if (!(spec.pulse_width > 0.0 && spec.interval > 0.0)) {
    throw DataError("pulse width and interval must be positive");
  }

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto leads = spec.n_leads, len = spec.seq_len;
  // amplitude motif on the first half of the leads, widening on the rest
  // except the last, which carries the rhythm alone
  const std::size_t boosted_leads = std::max<std::size_t>(1, leads / 2);
  const std::size_t widened_from = leads > 1 ? boosted_leads : 0;
  const std::size_t widened_to = leads > 2 ? leads - 1 : leads;

  Dataset ds;
  ds.header.n_leads = leads;
  ds.header.seq_len = len;
  ds.header.classes = spec.classes;
  ds.header.sample_rate = spec.sample_rate;
  ds.header.class_names.assign(kClassNames, kClassNames + spec.classes);
  ds.records.reserve(spec.records);

  for (std::size_t r = 0; r < spec.records; ++r) {
    EcgRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", r);
    rec.id = id;
    rec.fold = static_cast<int>(r % 10) + 1;
    rec.labels.resize(spec.classes);
    for (auto& l : rec.labels) l = unit(rng) < spec.label_prob ? 1 : 0;
    auto has = [&](std::size_t k) { return k < spec.classes && rec.labels[k] != 0; };

    const double amp = spec.pulse_amplitude * (1.0 + spec.amplitude_jitter * (2.0 * unit(rng) - 1.0));
    double interval = spec.interval * (1.0 + spec.interval_jitter * (2.0 * unit(rng) - 1.0));
    if (has(2)) interval *= spec.interval_factor;
    const double phase = spec.random_phase ? unit(rng) * interval : 0.5 * interval;

    auto pulse_train = [&](double widen) {
      std::vector<double> beat(len, 0.0);
      for (double centre = phase - interval; centre < static_cast<double>(len) + interval;
           centre += interval) {
        for (std::size_t t = 0; t < len; ++t) {
          const double ts = static_cast<double>(t);
          beat[t] += gaussian(ts, centre, spec.pulse_width * widen) +
                     kTWaveAmplitude * gaussian(ts, centre + kTWaveOffset, kTWaveWidth * widen);
        }
      }
      return beat;
    };
    const std::vector<double> narrow = pulse_train(1.0);
    const std::vector<double> wide = has(0) ? pulse_train(spec.width_factor) : narrow;

    rec.signal.resize(leads * len);
    for (std::size_t l = 0; l < leads; ++l) {
      double gain = amp * lead_gain(l, leads);
      if (has(1) && l < boosted_leads) gain *= spec.amplitude_factor;
      const auto& beat = l >= widened_from && l < widened_to ? wide : narrow;
      for (std::size_t t = 0; t < len; ++t) {
        rec.signal[l * len + t] = gain * beat[t];
      }
    }
    // noise is drawn after the clean signal so the clean part of a record
    // does not depend on noise_std
    for (auto& v : rec.signal) {
      const double e = noise(rng);
      v += spec.noise_std * e;
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace msw
