//! Read and write binary PGM, including 16-bit rasters and the log-domain
//! conversion used by the solver.

use reflsm::io::{from_log_domain, read_pgm, to_log_domain, write_pgm, RasterImage};

fn main() -> reflsm::Result<()> {
    let pixels: Vec<u16> = (0..12).map(|i| i * 5000).collect();
    let img = RasterImage::new(3, 4, 65535, pixels)?;
    let bytes = write_pgm(&img);
    let back = read_pgm(&bytes)?;
    assert_eq!(write_pgm(&back), bytes);
    println!("{} bytes, {}x{}, maxval {}", bytes.len(), back.height(), back.width(), back.maxval());

    let log = to_log_domain(&back)?;
    println!("log range [{:.4}, {:.4}]", log.min(), log.max());
    let restored = from_log_domain(&log, 255);
    println!("rescaled to 8 bit: {:?}", restored.pixels());

    let commented = b"P5\n# made by hand\n2 1\n255\n\x10\x20";
    println!("with comment: {:?}", read_pgm(commented)?.pixels());

    match read_pgm(b"P5\n2 2\n255\n\x00") {
        Err(e) => println!("truncated input rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
