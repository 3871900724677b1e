"""Scratch DGP tuning loop (deleted before finishing)."""
import math
import time

import numpy as np

from evmarket import _kernels
from evmarket.panel import Panel, PanelRecord, saturation_ratio, DEFAULT_EPSILON
from evmarket.modelspec import estimate_demand, estimate_supply


def gen(seed, rho, noise, *, a_park=0.6, park_sd=1.0, price_decay=0.94,
        eta_w=0.3, nu_w=0.5, omega_w=0.0, park_pop=0.0, q0_mult=1.5,
        e0=20.0, s0=150.0, a_ratio=0.8,
        b1=0.36, a1=0.5, delta=0.95, nz=50, nt=6, oil_growth=1.04):
    rng = np.random.default_rng(seed)
    d = {"intercept": 1.6, "ln(Charging station)": b1, "ln(oil_price)": 0.85,
         "ln(White Population)": 0.13, "ln(Asian Population)": 0.26,
         "EV_Burden": -3.2}
    s = {"intercept": -2.5, "ln(EV Stock)": a1, "ln(parking lot)": a_park,
         "saturation_ratio": a_ratio, "Rebate Percentage": 1.77}
    k = b1 * a1
    white = np.exp(rng.normal(math.log(20000.0), 0.6, nz))
    asian = np.exp(rng.normal(math.log(8000.0), 0.7, nz))
    parking = np.exp(rng.normal(math.log(800.0), park_sd, nz)) * \
        ((white + asian) / 28000.0) ** park_pop
    income = np.exp(rng.normal(math.log(70000.0), 0.35, nz))
    omega = rng.normal(0, omega_w*noise, nz)
    oil = 3.5 * oil_growth ** np.arange(nt) * np.exp(rng.normal(0, 0.05, nt))
    rebate = np.minimum(0.12 + 0.03 * np.arange(nt), 0.95)
    price = 52000.0 * price_decay ** np.arange(nt)[None, :] * np.exp(
        rng.normal(0, 0.03, (nz, nt)))
    sales = np.zeros((nz, nt)); stock = np.zeros((nz, nt)); stations = np.zeros((nz, nt))
    sales[:, 0] = np.exp(rng.normal(math.log(s0), 0.5, nz))
    stock[:, 0] = q0_mult * sales[:, 0]
    stations[:, 0] = np.exp(rng.normal(math.log(e0), 0.6, nz))
    lp = np.log1p(parking)
    dem_exog = d["intercept"] + d["ln(White Population)"]*np.log1p(white) + \
        d["ln(Asian Population)"]*np.log1p(asian)
    for t in range(1, nt):
        eta = rng.normal(0, eta_w*noise, nz)
        eps = rng.normal(0, noise, nz)
        nu = rng.normal(0, nu_w*noise, nz)
        u = eps + eta + omega
        w = nu + rho * eta
        ratio = np.array([saturation_ratio(stock[z, t-1], stations[z, t-1],
                                           DEFAULT_EPSILON) for z in range(nz)])
        sp = s["intercept"] + s["ln(parking lot)"]*lp + s["saturation_ratio"]*ratio \
            + s["Rebate Percentage"]*rebate[t] + w
        burden = price[:, t] / income
        dp = dem_exog + d["ln(oil_price)"]*math.log(oil[t]) + d["EV_Burden"]*burden + u
        c_arr = dp + d["ln(Charging station)"]*sp
        y, nf = _kernels.coupled_sales_batch(c_arr, k, delta, stock[:, t-1], 1e-12, 5000)
        assert nf == 0
        sales[:, t] = np.maximum(y - 1.0, 0.0)
        stock[:, t] = sales[:, t] + delta * stock[:, t-1]
        stations[:, t] = np.maximum(
            np.expm1(sp + s["ln(EV Stock)"]*np.log1p(stock[:, t])), 0.0)
    records = []
    for z in range(nz):
        for t in range(nt):
            records.append(PanelRecord(
                zip=f"z{z:04d}", year=2015+t, ev_sales=float(sales[z, t]),
                ev_stock=float(stock[z, t]), station_stock=float(stations[z, t]),
                avg_ev_price=float(price[z, t]), median_income=float(income[z]),
                white_pop=float(white[z]), asian_pop=float(asian[z]),
                oil_price=float(oil[t]), parking_lots=float(parking[z]),
                rebate_pct=float(rebate[t])))
    panel = Panel.from_records(records)
    lo, hi = panel.saturation_bounds
    truth_s = {"intercept": s["intercept"] + s["saturation_ratio"]*lo,
               "ln(EV Stock)": a1, "ln(parking lot)": a_park,
               "Saturation": s["saturation_ratio"]*(hi-lo),
               "Rebate Percentage": s["Rebate Percentage"]}
    return panel, d, truth_s


def experiment(reps=200, rho=-0.5, noise=0.2, **kw):
    t0 = time.time()
    cover_d = {}; cover_s = {}; ols_gt = 0
    fs_d = []; fs_s = []; gap = []
    for rep in range(reps):
        panel, td, ts = gen(3000+rep, rho, noise, **kw)
        dt = estimate_demand(panel, method="tsls")
        do = estimate_demand(panel, method="ols")
        st = estimate_supply(panel, method="tsls")
        fs_d.append(dt.first_stage_f); fs_s.append(st.first_stage_f)
        g = do.coefficients["ln(Charging station)"] - dt.coefficients["ln(Charging station)"]
        gap.append(g)
        ols_gt += g > 0
        for kk, v in td.items():
            cover_d[kk] = cover_d.get(kk, 0) + (abs(dt.coefficients[kk]-v) <= 3*dt.std_errors[kk])
        for kk, v in ts.items():
            cover_s[kk] = cover_s.get(kk, 0) + (abs(st.coefficients[kk]-v) <= 3*st.std_errors[kk])
    el = time.time() - t0
    print(f"  reps={reps} time={el:.1f}s  OLS>TSLS={ols_gt/reps:.3f}  "
          f"gap median={np.median(gap):.3f}")
    print(f"  cover_d={ {kk: round(v/reps,3) for kk,v in cover_d.items()} }")
    print(f"  cover_s={ {kk: round(v/reps,3) for kk,v in cover_s.items()} }")
    print(f"  F_d med={np.median(fs_d):.0f} min={min(fs_d):.1f}   "
          f"F_s med={np.median(fs_s):.0f} min={min(fs_s):.1f}")


if __name__ == "__main__":
    import sys
    which = sys.argv[1] if len(sys.argv) > 1 else "a"
    if which == "a":
        print("A: stronger parking (a_park=.6 sd=1.0), faster price decay, young stocks")
        experiment()
    elif which == "b":
        print("B: A + eta_w=0.2")
        experiment(eta_w=0.2)
    elif which == "c":
        print("C: A + noise=0.15")
        experiment(noise=0.15)
    elif which == "d":
        print("D: omega 0.4, park_pop 0.7, noise 0.3, eta_w 0.25")
        experiment(noise=0.3, eta_w=0.25, omega_w=0.4, park_pop=0.7,
                   park_sd=0.5)
    elif which == "e":
        print("E: D with omega 0.6")
        experiment(noise=0.3, eta_w=0.25, omega_w=0.6, park_pop=0.7,
                   park_sd=0.5)
    elif which == "f":
        print("F: D with omega 0.5, noise 0.35")
        experiment(noise=0.35, eta_w=0.25, omega_w=0.5, park_pop=0.7,
                   park_sd=0.5)
    elif which == "g":
        print("G: young stocks q0=0.5, strong park, small omega")
        experiment(noise=0.35, eta_w=0.25, omega_w=0.25, park_pop=0.7,
                   park_sd=1.0, q0_mult=0.5, e0=15.0, price_decay=0.93)
    elif which == "h":
        print("H: G without omega")
        experiment(noise=0.35, eta_w=0.25, omega_w=0.0, park_pop=0.7,
                   park_sd=1.0, q0_mult=0.5, e0=15.0, price_decay=0.93)
    elif which == "i":
        print("I: G with noise 0.45")
        experiment(noise=0.45, eta_w=0.25, omega_w=0.25, park_pop=0.7,
                   park_sd=1.0, q0_mult=0.5, e0=15.0, price_decay=0.93)
    elif which == "j":
        print("J: I + a1=0.7")
        experiment(noise=0.45, eta_w=0.25, omega_w=0.25, park_pop=0.7,
                   park_sd=1.0, q0_mult=0.5, e0=15.0, price_decay=0.93,
                   a1=0.7)
    elif which == "k":
        print("K: J + park_sd=1.3, eta_w=0.15, noise=0.4")
        experiment(noise=0.4, eta_w=0.15, omega_w=0.25, park_pop=0.7,
                   park_sd=1.3, q0_mult=0.5, e0=15.0, price_decay=0.93,
                   a1=0.7)
    elif which == "l":
        print("L: K without omega, a_park=0.8")
        experiment(noise=0.4, eta_w=0.15, omega_w=0.0, park_pop=0.7,
                   park_sd=1.3, q0_mult=0.5, e0=15.0, price_decay=0.93,
                   a1=0.7, a_park=0.8)
