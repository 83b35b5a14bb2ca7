use anyhow::{bail, Context as _, Result};

use roiaug_core::raster::{load_gray, save_pgm, save_png, BitDepth};
use roiaug_core::roibank::{build_bank_detailed, read_banks};

use super::file_stem;
use crate::overlay::render_overlay;
use crate::{Context, Outcome, VizArgs};

pub fn run(ctx: &Context, args: &VizArgs) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let mut banks = read_banks(&args.bank)?;
    let bank = match &args.image_id {
        Some(id) => banks
            .into_iter()
            .find(|b| &b.image_id == id)
            .with_context(|| format!("{} has no bank for {id}", args.bank.display()))?,
        None if banks.len() == 1 => banks.remove(0),
        None => bail!("{} holds {} banks; pick one with --image-id", args.bank.display(), banks.len()),
    };
    let img = load_gray(&args.image)?;
    if (bank.source_w, bank.source_h) != (img.width(), img.height()) {
        bail!(
            "bank {} is for {}x{} but {} is {}x{}",
            bank.image_id,
            bank.source_w,
            bank.source_h,
            args.image.display(),
            img.width(),
            img.height()
        );
    }
    let stem = file_stem(&bank.image_id);
    let path = ctx.out.join(format!("{stem}_overlay.png"));
    if bank.maskless {
        outcome.warn(format!("{}: maskless bank, writing the image unmodified", bank.image_id));
        save_png(&img, &path)?;
    } else {
        render_overlay(&img, &bank)
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("viz: {} boxes -> {}", bank.boxes.len(), path.display());

    if args.maps {
        let cfg = &ctx.config;
        let run = build_bank_detailed(&img, &bank.image_id, &cfg.mask, &cfg.saliency, &cfg.bank)?;
        let mask_path = ctx.out.join(format!("{stem}_mask.pgm"));
        save_pgm(&run.tissue.mask.to_image(), &mask_path, BitDepth::Eight)?;
        println!("viz: mask -> {}", mask_path.display());
        match run.saliency {
            Some(s) => {
                let sal_path = ctx.out.join(format!("{stem}_saliency.pgm"));
                save_pgm(&s.to_image(), &sal_path, BitDepth::Sixteen)?;
                println!("viz: saliency -> {}", sal_path.display());
            }
            None => outcome.warn(format!("{}: no saliency map for a maskless image", bank.image_id)),
        }
    }
    Ok(outcome)
}
