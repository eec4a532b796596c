use risloc::array::build_planar_ris;
use risloc::design::{build_beam_basis, solve_full_x_sdp, solve_lambda_sdp, DesignContext, SdpSettings};
use risloc::fim::{ChannelGain, SnrScale};
use risloc::geometry::CartesianPoint;

fn main() {
    let lambda = 0.0107;
    let arr = build_planar_ris(2, 2, lambda / 2.0, lambda).unwrap();
    let p = CartesianPoint::new(1.0, 2.0, 1.0);
    let beta = ChannelGain::new(4.2e-8, 0.0);
    let snr = SnrScale::new(8.33e-7, 2.51e-20).unwrap();
    let ctx = DesignContext::new(arr, p, beta, snr).unwrap();
    let basis = build_beam_basis(ctx.bundle(), true).unwrap();
    let r = solve_lambda_sdp(&basis, &ctx, 4.0, false, &SdpSettings::default()).unwrap();
    println!("reduced: {:?} obj {:.9e} peb^2 {:.9e}", r.status, r.objective, r.peb_at_optimum * r.peb_at_optimum);
    let f = solve_full_x_sdp(&ctx, 4.0, &SdpSettings::default()).unwrap();
    println!("full: {:?} obj {:.9e}", f.status, f.objective);
    let fr = ctx.evaluate_covariance(&f.x).unwrap();
    println!("full peb^2 from X = {:.9e}", fr.peb * fr.peb);
}
