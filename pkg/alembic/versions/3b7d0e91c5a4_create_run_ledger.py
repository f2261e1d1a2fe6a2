"""create run ledger

Revision ID: 3b7d0e91c5a4
Revises:
Create Date: 2026-10-16 10:12:41.337205

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa

# revision identifiers, used by Alembic.
revision: str = '3b7d0e91c5a4'
down_revision: Union[str, None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    op.create_table('runs',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('command', sa.String(length=32), nullable=False),
    sa.Column('master_seed', sa.Integer(), nullable=True),
    sa.Column('version', sa.String(length=16), nullable=False),
    sa.Column('status', sa.Enum('RUNNING', 'SUCCEEDED', 'FAILED', name='runstatus'), nullable=False),
    sa.Column('out_dir', sa.String(length=1024), nullable=False),
    sa.Column('manifest_path', sa.String(length=1024), nullable=True),
    sa.Column('started_at', sa.DateTime(timezone=True), server_default=sa.text('(CURRENT_TIMESTAMP)'), nullable=False),
    sa.Column('finished_at', sa.DateTime(timezone=True), nullable=True),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_runs_command'), 'runs', ['command'], unique=False)
    op.create_table('evaluations',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('generation', sa.Integer(), nullable=False),
    sa.Column('index', sa.Integer(), nullable=False),
    sa.Column('genes', sa.JSON(), nullable=False),
    sa.Column('f', sa.Float(), nullable=False),
    sa.Column('f_raw', sa.Float(), nullable=False),
    sa.Column('penalized', sa.Boolean(), nullable=False),
    sa.Column('energy', sa.Float(), nullable=True),
    sa.Column('pdr', sa.Float(), nullable=True),
    sa.Column('error', sa.String(length=500), nullable=True),
    sa.ForeignKeyConstraint(['run_id'], ['runs.id'], ),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_evaluations_run_id'), 'evaluations', ['run_id'], unique=False)
    op.create_table('metrics_records',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('scenario_id', sa.String(length=255), nullable=False),
    sa.Column('config_id', sa.String(length=255), nullable=False),
    sa.Column('seed', sa.Integer(), nullable=False),
    sa.Column('metrics', sa.JSON(), nullable=False),
    sa.ForeignKeyConstraint(['run_id'], ['runs.id'], ),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_metrics_records_run_id'), 'metrics_records', ['run_id'], unique=False)


def downgrade() -> None:
    op.drop_index(op.f('ix_metrics_records_run_id'), table_name='metrics_records')
    op.drop_table('metrics_records')
    op.drop_index(op.f('ix_evaluations_run_id'), table_name='evaluations')
    op.drop_table('evaluations')
    op.drop_index(op.f('ix_runs_command'), table_name='runs')
    op.drop_table('runs')
