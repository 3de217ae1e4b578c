from .dice import dice_per_label, mean_dice
from .stats import mann_whitney_one_sided, wilcoxon_signed_rank_one_sided
from .consistency import ConsistencyScores, consistency_scores, scan_rescan_consistency
from .report import COLUMNS, ReportRow, read_report, summarize, write_report
