//! `egoflow flow convert|viz`: move flow between `.flo`, KITTI PNG and
//! color wheel PNG.

use std::io::Write;
use std::path::PathBuf;

use clap::Subcommand;
use egoflow_core::codec::colorwheel_encode;
use egoflow_core::VmtImage;

use crate::config::{NormSpec, Overrides};
use crate::io::{encode_flow, read_flow, write_file, FlowFormat};
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Subcommand)]
pub enum FlowCommand {
    /// Convert between formats, chosen by extension (.flo or .png).
    Convert { input: PathBuf, output: PathBuf },
    /// Render flow as a color wheel PNG. Invalid pixels are black.
    Viz {
        input: PathBuf,
        output: Option<PathBuf>,
        /// Write the PNG to standard output instead of a file.
        #[arg(long, conflicts_with = "output")]
        stdout: bool,
        /// auto, pNN or fixed:SCALE.
        #[arg(long, value_name = "MODE")]
        norm: Option<NormSpec>,
    },
}

pub fn run(base: &Overrides, cmd: FlowCommand) -> CliResult<()> {
    match cmd {
        FlowCommand::Convert { input, output } => {
            let format = FlowFormat::of(&output)?;
            let flow = read_flow(&input)?;
            let bytes = encode_flow(&flow, format)?;
            write_file(&output, &bytes).map_err(|e| CliError::Failed(format!("{}: {e}", output.display())))
        }
        FlowCommand::Viz { input, output, stdout, norm } => {
            if output.is_none() && !stdout {
                return Err(usage("give an output path or --stdout"));
            }
            let flow = read_flow(&input)?;
            let spec = base.norm(norm, NormSpec::Auto)?;
            let norm = spec.resolve(&mut spec.samples(flow.field()))?;
            let image = colorwheel_encode(flow.field(), norm).map_err(|e| usage(e.to_string()))?;
            let mut rgb = image.rgb().to_vec();
            for (i, px) in rgb.chunks_exact_mut(3).enumerate() {
                if !flow.is_valid(i) {
                    px.fill(0);
                }
            }
            let png = VmtImage::new(image.width(), image.height(), rgb)
                .and_then(|img| img.to_png())
                .map_err(|e| CliError::Failed(e.to_string()))?;
            match output {
                Some(path) => write_file(&path, &png).map_err(|e| CliError::Failed(format!("{}: {e}", path.display()))),
                None => {
                    let mut out = std::io::stdout().lock();
                    out.write_all(&png).and_then(|_| out.flush()).map_err(|e| CliError::Failed(e.to_string()))
                }
            }
        }
    }
}
