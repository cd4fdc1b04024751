"""Post-processing of measurement sessions."""
from .report import analyze_session, p_value_range, render_text, session_svgs, synthetic_session
from .session import (COLUMNS, Session, Window, format_session, parse_session, read_session,
                      write_session)
from .stats import (LinearFit, PolyFit, SampleSeries, TTestResult, betainc_reg, horner,
                    linear_fit, polyfit, t_test_two_tailed, window_mean)
