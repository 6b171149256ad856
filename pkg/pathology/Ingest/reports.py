"""Aligned-text renderings of experiment, analysis and summary reports."""

import pandas as pd

from pathology.Ingest.config import EXPERIMENTS


def _percent(value):
    return '-' if value is None else f"{100 * value:.2f}"


def hyperparameter_frame(hyperparameters):
    return pd.DataFrame([
        {'classifier': name.upper(), 'learning rate': f"{hp['learning_rate']:g}", 'batch': hp['batch_size'],
         'epochs': hp['epochs'], 'CV MCC': '-' if hp.get('cv_mcc') is None else f"{hp['cv_mcc']:.4f}"}
        for name, hp in sorted(hyperparameters.items())
    ])


def format_experiment(report):
    metrics = report['metrics']
    lines = [
        f"{report['experiment']}  seed={report.get('seed')}  split={report.get('split_unit')}",
        '',
        pd.DataFrame([{
            'Accuracy (%)': _percent(metrics['accuracy']),
            'Weighted F1 (%)': _percent(metrics['weighted_f1']),
            'MCC (%)': _percent(metrics['mcc']),
            'HC detection (%)': _percent(report['healthy_detection_accuracy']),
        }]).to_string(index=False),
        '',
        'Per-class accuracy (%)',
        pd.DataFrame([{label: _percent(value) for label, value in report['per_class_accuracy'].items()}])
        .to_string(index=False),
        '',
        'Confusion matrix (rows true, columns predicted)',
        pd.DataFrame(report['confusion_matrix']['counts'], index=report['confusion_matrix']['class_names'],
                     columns=report['confusion_matrix']['class_names']).to_string(),
    ]
    if 'stage1' in report:
        stage1 = report['stage1']
        lines += [
            '',
            f"Stage 1: accuracy {_percent(stage1['accuracy'])}%, MCC {_percent(stage1['mcc'])}%",
            pd.DataFrame(stage1['confusion_matrix']['counts'], index=stage1['confusion_matrix']['class_names'],
                         columns=stage1['confusion_matrix']['class_names']).to_string(),
        ]
    if report.get('hyperparameters'):
        lines += ['', hyperparameter_frame(report['hyperparameters']).to_string(index=False)]
    return '\n'.join(lines) + '\n'


def ordered(reports):
    return sorted(reports, key=lambda r: EXPERIMENTS.index(r['experiment']))


def results_table(reports):
    """One row per experiment: accuracy, weighted F1, MCC and the chosen hyperparameters."""
    rows = []
    for report in ordered(reports):
        hp = report.get('hyperparameters', {})
        rows.append({
            'Experiment': report['experiment'],
            'Accuracy (%)': _percent(report['metrics']['accuracy']),
            'Weighted F1 (%)': _percent(report['metrics']['weighted_f1']),
            'MCC (%)': _percent(report['metrics']['mcc']),
            'Hyperparameters (lr, batch, epochs)': '; '.join(
                f"{name.upper()} ({h['learning_rate']:g}, {h['batch_size']}, {h['epochs']})"
                for name, h in sorted(hp.items())),
        })
    return pd.DataFrame(rows)


def per_class_table(reports):
    """Per-class accuracy, one column per experiment."""
    frame = pd.DataFrame({r['experiment']: {label: _percent(v) for label, v in r['per_class_accuracy'].items()}
                          for r in ordered(reports)})
    frame.index.name = 'Class'
    return frame
