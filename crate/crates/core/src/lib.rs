//! Synthetic adherent raindrops for image augmentation, and the metrics used
//! to measure how much they hurt (and how much a restoration recovers).
//!
//! The pieces, bottom up:
//!
//! - [`protodrop`]: one canonical droplet as a four-channel lookup texture
//!   (refraction offsets, thickness, coverage).
//! - [`dropfield`]: a seeded population of droplets that spawn, slip under
//!   gravity, and merge through a metaball field.
//! - [`render`]: the full-frame composite texture and the refraction warp
//!   that turns a clean image into a rainy one.
//! - [`metrics`]: PSNR, SSIM, binary segmentation statistics and mIOU.
//! - [`pipeline`]: dataset augmentation with replayable manifests, and
//!   dataset-to-dataset comparison.
//!
//! ```
//! use droplens::{Config, DropField, ImageBuffer};
//! use droplens::protodrop::generate_protodrop;
//! use droplens::render::render_frame;
//!
//! let cfg = Config::default();
//! let proto = generate_protodrop(cfg.proto)?;
//! let mut field = DropField::new(cfg.field.clone())?;
//! field.spawn(320, 240)?;
//!
//! let clean = droplens::corpus::street_scene(0);
//! let (rainy, mask, _) = render_frame(&field, &proto, &clean, &cfg.render)?;
//! assert_eq!(rainy.dims(), clean.dims());
//! assert_eq!(mask.channels(), 1);
//! # Ok::<(), droplens::Error>(())
//! ```
//!
//! The guide in `book/` walks through the model in more depth; its code
//! listings are compiled and run as doctests of this crate.

pub mod config;
pub mod corpus;
pub mod dropfield;
mod error;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod protodrop;
pub mod render;

pub use config::Config;
pub use dropfield::{DropField, Droplet, FieldConfig};
pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use metrics::{MetricsReport, SegStats};
pub use protodrop::{ProtoDropTexture, ProtoParams};
pub use render::{CompositeMap, RenderParams};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/protodrop.md")]
    mod protodrop {}
    #[doc = include_str!("../../../book/src/dropfield.md")]
    mod dropfield {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    mod rendering {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
