use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleMode {
    /// `eps_g^(k+2) / ((k+1)! nu_k)`.
    Theoretical,
    /// Geometric interpolation from `eps_g` down to `eta/2` over `K` stages.
    Practical,
    /// Constant `eta/2`: the classical algorithm.
    Fixed,
}

impl ScheduleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleMode::Theoretical => "theoretical",
            ScheduleMode::Practical => "practical",
            ScheduleMode::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "theoretical" => Some(ScheduleMode::Theoretical),
            "practical" => Some(ScheduleMode::Practical),
            "fixed" | "classical" => Some(ScheduleMode::Fixed),
            _ => None,
        }
    }
}

/// Fine accuracy required at each parareal iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSchedule {
    pub mode: ScheduleMode,
    pub eps_g: f64,
    pub eta: f64,
    /// Anticipated iteration count, used by the practical mode.
    pub k_anticipated: usize,
    /// Normalisation factors of the theoretical mode; missing entries are 1.
    pub nu: Vec<f64>,
}

impl ToleranceSchedule {
    pub fn theoretical(eps_g: f64, eta: f64) -> Self {
        Self {
            mode: ScheduleMode::Theoretical,
            eps_g,
            eta,
            k_anticipated: 1,
            nu: Vec::new(),
        }
    }

    pub fn practical(eps_g: f64, eta: f64, k: usize) -> Self {
        Self {
            mode: ScheduleMode::Practical,
            eps_g,
            eta,
            k_anticipated: k,
            nu: Vec::new(),
        }
    }

    pub fn fixed(eps_g: f64, eta: f64) -> Self {
        Self {
            mode: ScheduleMode::Fixed,
            eps_g,
            eta,
            k_anticipated: 1,
            nu: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.eps_g > 0.0 && self.eps_g.is_finite()) {
            return Err(invalid("eps_g", "must be positive"));
        }
        if self.mode == ScheduleMode::Practical && self.k_anticipated == 0 {
            return Err(invalid("K", "practical schedule needs K >= 1"));
        }
        if self.nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("nu", "entries must be positive"));
        }
        Ok(())
    }

    pub fn nu(&self, k: usize) -> f64 {
        self.nu.get(k).copied().unwrap_or(1.0)
    }

    pub fn set_nu(&mut self, k: usize, value: f64) {
        if self.nu.len() <= k {
            self.nu.resize(k + 1, 1.0);
        }
        self.nu[k] = value;
    }

    pub fn zeta(&self, k: usize) -> f64 {
        schedule_zeta(self, k)
    }
}

/// Required fine accuracy at iteration `k`.
pub fn schedule_zeta(s: &ToleranceSchedule, k: usize) -> f64 {
    let half_eta = 0.5 * s.eta;
    match s.mode {
        ScheduleMode::Fixed => half_eta,
        ScheduleMode::Theoretical => {
            let mut z = s.eps_g * s.eps_g;
            for j in 2..=k + 1 {
                z *= s.eps_g / j as f64;
            }
            z / s.nu(k)
        }
        ScheduleMode::Practical => {
            let big_k = s.k_anticipated;
            if k >= big_k {
                return half_eta;
            }
            let e = (k + 1) as f64 / big_k as f64;
            s.eps_g.powf(1.0 - e) * half_eta.powf(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn theoretical_values() {
        let s = ToleranceSchedule::theoretical(0.1, 1e-8);
        assert_eq!(s.zeta(0), 0.1 * 0.1);
        assert!((s.zeta(0) / 0.01 - 1.0).abs() < 1e-15);
        assert!((s.zeta(1) / 5e-4 - 1.0).abs() < 1e-15);
        // 0.1^5 / 4!
        assert!((s.zeta(3) / (1e-5 / 24.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn practical_values() {
        let s = ToleranceSchedule::practical(0.1, 1e-8, 4);
        assert_eq!(s.zeta(3), 5e-9);
        assert_eq!(s.zeta(4), 5e-9);
        assert_eq!(s.zeta(40), 5e-9);
        // 0.1^(3/4) * (5e-9)^(1/4), evaluated in 30-digit arithmetic
        let frozen = 0.001495348781221220541911898994;
        assert!((s.zeta(0) / frozen - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_is_constant() {
        let s = ToleranceSchedule::fixed(0.1, 2e-6);
        assert!((0..10).all(|k| s.zeta(k) == 1e-6));
    }

    #[test]
    fn nu_divides_theoretical() {
        let mut s = ToleranceSchedule::theoretical(0.2, 1e-6);
        s.set_nu(2, 2.0);
        assert_eq!(s.nu(1), 1.0);
        let plain = ToleranceSchedule::theoretical(0.2, 1e-6);
        assert_eq!(s.zeta(2), plain.zeta(2) / 2.0);
        assert_eq!(s.zeta(1), plain.zeta(1));
    }

    #[test]
    fn validation() {
        assert!(ToleranceSchedule::practical(0.1, 1e-8, 0).validate().is_err());
        assert!(ToleranceSchedule::fixed(0.1, 0.0).validate().is_err());
        assert!(ToleranceSchedule::theoretical(-1.0, 1e-3).validate().is_err());
        assert!(ToleranceSchedule::theoretical(0.1, 1e-3).validate().is_ok());
        assert_eq!(ScheduleMode::parse("practical"), Some(ScheduleMode::Practical));
        assert_eq!(ScheduleMode::parse(ScheduleMode::Theoretical.as_str()), Some(ScheduleMode::Theoretical));
    }

    proptest! {
        #[test]
        fn schedules_are_positive_and_nonincreasing(
            eps_exp in -3.0f64..-0.05,
            eta_exp in -12.0f64..-3.0,
            big_k in 1usize..30,
        ) {
            let eps_g = 10f64.powf(eps_exp);
            let eta = 10f64.powf(eta_exp);
            prop_assume!(eps_g >= eta / 2.0);
            for s in [
                ToleranceSchedule::theoretical(eps_g, eta),
                ToleranceSchedule::practical(eps_g, eta, big_k),
            ] {
                let z: Vec<f64> = (0..40).map(|k| s.zeta(k)).collect();
                prop_assert!(z.iter().all(|v| *v > 0.0 || s.mode == ScheduleMode::Theoretical));
                prop_assert!(z.windows(2).all(|w| w[1] <= w[0]));
            }
        }

        #[test]
        fn practical_ends_at_half_eta(
            eps_g in 1e-3f64..0.9,
            eta_exp in -12.0f64..-2.0,
            big_k in 1usize..60,
        ) {
            let eta = 10f64.powf(eta_exp);
            let s = ToleranceSchedule::practical(eps_g, eta, big_k);
            prop_assert!((s.zeta(big_k - 1) - eta / 2.0).abs() <= 1e-14 * eta / 2.0);
        }
    }
}
