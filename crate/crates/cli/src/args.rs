use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempmode::pipeline::{ModeSource, PipelineConfig, SegmentFormat};
use tempmode::synth::HeraldKind;

#[derive(Debug, Parser)]
#[command(
    name = "tempmode",
    version,
    about = "Temporal-mode extraction and tomography"
)]
pub struct Cli {
    /// TOML config; its values replace the defaults and flags replace it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for the data-parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize state and vacuum trace ensembles.
    Simulate(Overrides),
    /// Extract the mode basis and significance table from trace files.
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Reconstruct the state in one temporal mode from trace files.
    Tomography {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the two-herald pipeline across a list of delays.
    Sweep(Overrides),
    /// Run the acceptance suite.
    Selftest {
        /// Run only these criteria.
        #[arg(long = "only", value_name = "ID")]
        only: Vec<u8>,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// State trace file (.seg or .csv).
    #[arg(long)]
    pub state: PathBuf,
    /// Vacuum reference trace file.
    #[arg(long)]
    pub vacuum: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Vacuum,
    SinglePhoton,
    TwoPhoton,
    CssPhotonSubtracted,
}

impl From<KindArg> for HeraldKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Vacuum => HeraldKind::Vacuum,
            KindArg::SinglePhoton => HeraldKind::SinglePhoton,
            KindArg::TwoPhoton => HeraldKind::TwoPhoton,
            KindArg::CssPhotonSubtracted => HeraldKind::CssPhotonSubtracted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeSourceArg {
    Extracted,
    Analytic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

/// One flag per config key; unset flags leave the config untouched.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub gamma_hz: Option<f64>,
    #[arg(long)]
    pub delta_t_s: Option<f64>,
    /// Comma-separated delays for `sweep`; `simulate` writes one file each.
    #[arg(long, value_delimiter = ',')]
    pub delta_t_sweep_s: Option<Vec<f64>>,
    #[arg(long)]
    pub efficiency: Option<f64>,
    #[arg(long)]
    pub dark_fraction: Option<f64>,
    #[arg(long)]
    pub squeezing_db: Option<f64>,
    #[arg(long)]
    pub lowpass_hz: Option<f64>,
    #[arg(long)]
    pub highpass_hz: Option<f64>,
    #[arg(long)]
    pub jitter_s: Option<f64>,
    #[arg(long)]
    pub thermal_amplitude: Option<f64>,
    #[arg(long)]
    pub raw_gain: Option<f64>,
    #[arg(long)]
    pub dt_s: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub t0_s: Option<f64>,
    #[arg(long)]
    pub n_segments: Option<usize>,
    #[arg(long)]
    pub vacuum_segments: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub z_threshold: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub subtract_mean: Option<bool>,
    #[arg(long)]
    pub export_modes: Option<usize>,
    #[arg(long, value_enum)]
    pub mode_source: Option<ModeSourceArg>,
    #[arg(long)]
    pub loss_efficiency: Option<f64>,
    #[arg(long)]
    pub n_x_bins: Option<usize>,
    #[arg(long)]
    pub x_range: Option<f64>,
    #[arg(long)]
    pub n_phase_bins: Option<usize>,
    #[arg(long)]
    pub wigner_half_width: Option<f64>,
    #[arg(long)]
    pub wigner_step: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Output directory.
    #[arg(long = "out", short = 'o')]
    pub directory: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub segment_format: Option<FormatArg>,
    #[arg(long)]
    pub csv: Option<bool>,
    #[arg(long)]
    pub save_kernels: Option<bool>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Overrides {
    pub fn apply(self, c: &mut PipelineConfig) {
        let s = &mut c.scenario;
        set(&mut s.kind, self.kind.map(Into::into));
        set(&mut s.gamma_hz, self.gamma_hz);
        set(&mut s.delta_t_s, self.delta_t_s);
        set(&mut s.delta_t_sweep_s, self.delta_t_sweep_s);
        set(&mut s.efficiency, self.efficiency);
        set(&mut s.dark_fraction, self.dark_fraction);
        set(&mut s.squeezing_db, self.squeezing_db);
        if self.lowpass_hz.is_some() {
            s.lowpass_hz = self.lowpass_hz;
        }
        set(&mut s.highpass_hz, self.highpass_hz);
        set(&mut s.jitter_s, self.jitter_s);
        set(&mut s.thermal_amplitude, self.thermal_amplitude);
        set(&mut s.raw_gain, self.raw_gain);

        set(&mut c.grid.dt_s, self.dt_s);
        set(&mut c.grid.n_samples, self.n_samples);
        if self.t0_s.is_some() {
            c.grid.t0_s = self.t0_s;
        }
        set(&mut c.n_segments, self.n_segments);
        if self.vacuum_segments.is_some() {
            c.vacuum_segments = self.vacuum_segments;
        }
        set(&mut c.seed, self.seed);

        let a = &mut c.analysis;
        set(&mut a.z_threshold, self.z_threshold);
        if self.cutoff.is_some() {
            a.cutoff = self.cutoff;
        }
        set(&mut a.subtract_mean, self.subtract_mean);
        set(&mut a.export_modes, self.export_modes);
        set(
            &mut a.mode_source,
            self.mode_source.map(|m| match m {
                ModeSourceArg::Extracted => ModeSource::Extracted,
                ModeSourceArg::Analytic => ModeSource::Analytic,
            }),
        );
        if self.loss_efficiency.is_some() {
            a.loss_efficiency = self.loss_efficiency;
        }
        set(&mut a.binning.n_x_bins, self.n_x_bins);
        set(&mut a.binning.x_range, self.x_range);
        set(&mut a.binning.n_phase_bins, self.n_phase_bins);
        set(&mut a.wigner.half_width, self.wigner_half_width);
        set(&mut a.wigner.step, self.wigner_step);
        set(&mut a.max_iterations, self.max_iterations);
        set(&mut a.tolerance, self.tolerance);

        let o = &mut c.output;
        set(&mut o.directory, self.directory);
        set(
            &mut o.segment_format,
            self.segment_format.map(|f| match f {
                FormatArg::Binary => SegmentFormat::Binary,
                FormatArg::Csv => SegmentFormat::Csv,
            }),
        );
        set(&mut o.csv, self.csv);
        set(&mut o.save_kernels, self.save_kernels);
    }
}
